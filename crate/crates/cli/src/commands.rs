use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use forge_core::assembly::RemovalMode;
use forge_core::env::{first_divergence, replay as replay_actions, EpisodeConfig};
use forge_core::eval::agent::{AgentConfig, AgentKind};
use forge_core::eval::driver::{suite_of, EpisodeDriver, LocalDriver};
use forge_core::eval::harness::{run_suite, RunSettings};
use forge_core::eval::report::build_report;
use forge_core::eval::store::{
    load_runs, read_trajectories, write_meta, LoadedRun, RunMeta, TrajectoryWriter, TRAJECTORY_FILE,
};
use forge_core::eval::EvalMode;
use forge_core::gen::{generate_batch, BatchSpec, BatchSummary, GenConfig};
use forge_core::puzzle::{load_dataset, SCHEMA_VERSION};
use forge_core::voxel::BoxDims;
use forge_core::Difficulty;
use forge_service::{AppState, HttpDriver, ServiceConfig};
use serde::Serialize;

use crate::config::{EvalFile, GenFile, ReplayFile, ReportFile, ServeFile};
use crate::{EvalArgs, GenArgs, ReplayArgs, ReportArgs, ServeArgs};

pub const EXIT_OK: u8 = 0;
pub const EXIT_IO: u8 = 1;
pub const EXIT_SHORTFALL: u8 = 2;
pub const EXIT_MISMATCH: u8 = 3;
pub const EXIT_USAGE: u8 = 64;

fn usage(msg: impl std::fmt::Display) -> u8 {
    eprintln!("error: {msg}");
    EXIT_USAGE
}

fn io_fail(msg: impl std::fmt::Display) -> u8 {
    eprintln!("error: {msg}");
    EXIT_IO
}

fn print_resolved<T: Serialize>(command: &str, resolved: &T) {
    match toml::to_string(resolved) {
        Ok(s) => eprintln!("# resolved {command} config\n{s}"),
        Err(e) => log::warn!("could not print resolved config: {e}"),
    }
}

fn non_empty<T>(flag: Vec<T>, file: Option<Vec<T>>) -> Option<Vec<T>> {
    if flag.is_empty() {
        file
    } else {
        Some(flag)
    }
}

#[derive(Serialize)]
struct GenResolved {
    #[serde(rename = "box")]
    boxes: Vec<String>,
    mode: Vec<String>,
    count: usize,
    seed: u64,
    out: PathBuf,
    require_assembly: bool,
    removability: String,
    workers: usize,
    min_piece: Vec<usize>,
    max_piece: Option<usize>,
    max_pieces: usize,
    attempts: usize,
    hard_threshold: u64,
    node_budget: u64,
    max_calls_factor: usize,
}

pub fn gen(a: GenArgs, f: GenFile) -> u8 {
    let Some(boxes) = non_empty(a.boxes, f.boxes) else {
        return usage("gen needs --box");
    };
    let Some(modes) = non_empty(a.modes, f.modes) else {
        return usage("gen needs --mode");
    };
    let Some(count) = a.count.or(f.count) else {
        return usage("gen needs --count");
    };
    let Some(out) = a.out.or(f.out) else {
        return usage("gen needs --out");
    };
    let sizes: Vec<BoxDims> = match boxes.iter().map(|b| b.parse::<BoxDims>()).collect() {
        Ok(v) => v,
        Err(e) => return usage(format!("--box: {e}")),
    };
    let difficulties: Vec<Difficulty> = match modes.iter().map(|m| m.parse()).collect() {
        Ok(v) => v,
        Err(e) => return usage(format!("--mode: {e}")),
    };
    let removability = a
        .removability
        .or(f.removability)
        .unwrap_or_else(|| "full-slide".into());
    let removal_mode: RemovalMode = match removability.parse() {
        Ok(m) => m,
        Err(e) => return usage(format!("--removability: {e}")),
    };
    let defaults = GenConfig::new(sizes[0], Difficulty::Mid, 0);
    let resolved = GenResolved {
        boxes: sizes.iter().map(|d| d.to_string()).collect(),
        mode: difficulties.iter().map(|d| d.to_string()).collect(),
        count,
        seed: a.seed.or(f.seed).unwrap_or(0),
        out,
        require_assembly: a.require_assembly || f.require_assembly.unwrap_or(false),
        removability,
        workers: a.workers.or(f.workers).unwrap_or(1).max(1),
        min_piece: non_empty(a.min_piece, f.min_piece).unwrap_or(defaults.min_piece_stages.clone()),
        max_piece: a.max_piece.or(f.max_piece),
        max_pieces: a.max_pieces.or(f.max_pieces).unwrap_or(defaults.max_pieces),
        attempts: a.attempts.or(f.attempts).unwrap_or(defaults.attempts_per_stage),
        hard_threshold: a
            .hard_threshold
            .or(f.hard_threshold)
            .unwrap_or(defaults.hard_min_visited_nodes),
        node_budget: a.node_budget.or(f.node_budget).unwrap_or(defaults.node_budget),
        max_calls_factor: a.max_calls_factor.or(f.max_calls_factor).unwrap_or(20),
    };
    print_resolved("gen", &resolved);

    let mut total = BatchSummary {
        target: count,
        cells: Vec::new(),
    };
    // One batch per mode so each gets its own default piece-size bounds.
    for &mode in &difficulties {
        let mut template = GenConfig::new(sizes[0], mode, resolved.seed);
        template.min_piece_stages = resolved.min_piece.clone();
        if let Some(m) = resolved.max_piece {
            template.max_piece_cells = m;
        }
        template.max_pieces = resolved.max_pieces;
        template.attempts_per_stage = resolved.attempts;
        template.hard_min_visited_nodes = resolved.hard_threshold;
        template.node_budget = resolved.node_budget;
        template.require_linear_assembly = resolved.require_assembly;
        template.removal_mode = removal_mode;
        if let Err(e) = template.validate() {
            return usage(e);
        }
        let spec = BatchSpec {
            sizes: sizes.clone(),
            modes: vec![mode],
            per_cell_target: count,
            template,
            out_dir: resolved.out.clone(),
            workers: resolved.workers,
            max_call_factor: resolved.max_calls_factor,
        };
        match generate_batch(&spec) {
            Ok(s) => total.cells.extend(s.cells),
            Err(e) => return io_fail(format!("writing {}: {e}", resolved.out.display())),
        }
    }
    let mut io_errors = 0;
    for c in &total.cells {
        let rejected: Vec<String> = c.rejections.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!(
            "{} {}: accepted {} already-present {} duplicates {} failed-calls {} calls {} rejected [{}]",
            c.dims.map(|d| d.to_string()).unwrap_or_default(),
            c.mode.map(|m| m.to_string()).unwrap_or_default(),
            c.accepted,
            c.already_present,
            c.duplicates,
            c.generation_failures,
            c.calls,
            rejected.join(" ")
        );
        io_errors += c.io_errors;
    }
    println!("total accepted {}", total.accepted());
    if io_errors > 0 {
        return io_fail(format!("{io_errors} puzzle(s) could not be written"));
    }
    if !total.targets_met() {
        eprintln!("target of {count} per (box, mode) not met");
        return EXIT_SHORTFALL;
    }
    EXIT_OK
}

#[derive(Serialize)]
struct ServeResolved {
    data: PathBuf,
    state_dir: PathBuf,
    host: String,
    port: u16,
    token: String,
    seed: Option<u64>,
}

pub fn serve(a: ServeArgs, f: ServeFile) -> u8 {
    let env = match ServiceConfig::from_env() {
        Ok(c) => c,
        Err(e) => return usage(e),
    };
    let mut cfg = ServiceConfig::new(a.data.or(f.data).unwrap_or(env.data_dir));
    cfg.state_dir = a.state_dir.or(f.state_dir);
    cfg.port = a.port.or(f.port).unwrap_or(env.port);
    cfg.token = a.token.or(f.token).or(env.token).filter(|t| !t.is_empty());
    cfg.seed = a.seed.or(f.seed);
    let host = a.host.or(f.host).unwrap_or_else(|| "127.0.0.1".into());
    print_resolved(
        "serve",
        &ServeResolved {
            data: cfg.data_dir.clone(),
            state_dir: cfg.state_dir(),
            host: host.clone(),
            port: cfg.port,
            token: if cfg.token.is_some() {
                "<set>".into()
            } else {
                "<none>".into()
            },
            seed: cfg.seed,
        },
    );
    let addr: SocketAddr = match format!("{host}:{}", cfg.port).parse() {
        Ok(a) => a,
        Err(e) => return usage(format!("--host: {e}")),
    };
    let state = match AppState::open(cfg) {
        Ok(s) => Arc::new(s),
        Err(e) => return io_fail(e),
    };
    eprintln!("serving {} instance(s) on http://{addr}", state.dataset.len());
    let rt = match tokio::runtime::Builder::new_multi_thread().enable_all().build() {
        Ok(rt) => rt,
        Err(e) => return io_fail(e),
    };
    let out = rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        forge_service::serve(listener, state).await
    });
    match out {
        Ok(()) => EXIT_OK,
        Err(e) => io_fail(e),
    }
}

fn load_agent(spec: &str) -> Result<AgentConfig, String> {
    match spec {
        "oracle" => return Ok(AgentConfig::of_kind(AgentKind::Oracle)),
        "random" => return Ok(AgentConfig::of_kind(AgentKind::Random)),
        _ => {}
    }
    let text = std::fs::read_to_string(spec).map_err(|e| format!("--agent {spec}: {e}"))?;
    let cfg: AgentConfig = toml::from_str(&text).map_err(|e| format!("--agent {spec}: {e}"))?;
    cfg.validate().map_err(|e| format!("--agent {spec}: {e}"))?;
    Ok(cfg)
}

#[derive(Serialize)]
struct EvalResolved {
    suite: PathBuf,
    agent: AgentConfig,
    mode: EvalMode,
    k: u32,
    budget: Option<u32>,
    history_window: usize,
    seed: u64,
    out: PathBuf,
    parallel: usize,
    service: Option<String>,
    via_service: bool,
}

fn fresh_dir(base: PathBuf) -> PathBuf {
    if !base.join(TRAJECTORY_FILE).exists() {
        return base;
    }
    (2..)
        .map(|i| PathBuf::from(format!("{}-{i}", base.display())))
        .find(|p| !p.join(TRAJECTORY_FILE).exists())
        .expect("unbounded")
}

pub fn eval(a: EvalArgs, f: EvalFile) -> u8 {
    let Some(suite_dir) = a.suite.or(f.suite) else {
        return usage("eval needs --suite");
    };
    let Some(agent_spec) = a.agent.or(f.agent) else {
        return usage("eval needs --agent");
    };
    let agent = match load_agent(&agent_spec) {
        Ok(c) => c,
        Err(e) => return usage(e),
    };
    let mode: EvalMode = match a.mode.or(f.mode).as_deref().unwrap_or("interactive").parse() {
        Ok(m) => m,
        Err(e) => return usage(format!("--mode: {e}")),
    };
    let k = a.k.or(f.k).unwrap_or(1);
    if k == 0 {
        return usage("--k must be at least 1");
    }
    let budget = a.budget.or(f.budget);
    if let Some(b) = budget {
        if !(forge_core::env::MIN_BUDGET..=forge_core::env::MAX_BUDGET).contains(&b) {
            return usage(format!("--budget {b} out of range"));
        }
    }
    let history_window = a
        .history_window
        .or(f.history_window)
        .unwrap_or(agent.history_window);
    if history_window == 0 {
        return usage("--history-window must be at least 1");
    }
    let seed = a.seed.or(f.seed).unwrap_or(0);
    let service = a.service.or(f.service);
    let via_service = a.via_service || f.via_service.unwrap_or(false);
    if service.is_some() && via_service {
        return usage("--service and --via-service are exclusive");
    }
    let run_id = format!("{}-{}-s{seed}", agent.agent_id(), mode);
    let out = a
        .out
        .or(f.out)
        .unwrap_or_else(|| fresh_dir(PathBuf::from("runs").join(&run_id)));
    let resolved = EvalResolved {
        suite: suite_dir.clone(),
        agent,
        mode,
        k,
        budget,
        history_window,
        seed,
        out: out.clone(),
        parallel: a.parallel.or(f.parallel).unwrap_or(1).max(1),
        service,
        via_service,
    };
    print_resolved("eval", &resolved);

    let stored = match load_dataset(&suite_dir) {
        Ok(s) => s,
        Err(e) => return io_fail(e),
    };
    if stored.is_empty() {
        eprintln!("suite {} holds no puzzles", suite_dir.display());
        return EXIT_SHORTFALL;
    }
    if out.join(TRAJECTORY_FILE).exists() {
        return io_fail(format!("{} already holds trajectories", out.display()));
    }
    let meta = RunMeta {
        schema_version: SCHEMA_VERSION,
        run_id,
        agent: resolved.agent.clone(),
        mode,
        k,
        budget,
        history_window,
        seed,
        suite: suite_dir.display().to_string(),
        instances: stored.len(),
    };
    if let Err(e) = write_meta(&out, &meta) {
        return io_fail(e);
    }
    let mut writer = match TrajectoryWriter::open(&out.join(TRAJECTORY_FILE)) {
        Ok(w) => w,
        Err(e) => return io_fail(e),
    };

    // Keeps the in-process server alive for the whole run.
    let mut _server = None;
    let url = match (&resolved.service, via_service) {
        (Some(u), _) => Some(u.clone()),
        (None, true) => {
            let mut cfg = ServiceConfig::new(&suite_dir);
            cfg.state_dir = Some(out.join("service"));
            cfg.seed = Some(seed);
            let state = match AppState::with_dataset(cfg, stored.clone()) {
                Ok(s) => Arc::new(s),
                Err(e) => return io_fail(e),
            };
            let server = match forge_service::spawn(state, SocketAddr::from(([127, 0, 0, 1], 0))) {
                Ok(s) => s,
                Err(e) => return io_fail(e),
            };
            let u = server.url();
            eprintln!("in-process service on {u}");
            _server = Some(server);
            Some(u)
        }
        (None, false) => None,
    };
    let token = a.token.or(f.token);
    if let Some(u) = &url {
        if let Err(e) = HttpDriver::new(u, token.clone()) {
            return io_fail(e);
        }
    }
    let suite = Arc::new(suite_of(&stored));
    let make_driver = |url: &Option<String>| -> Box<dyn EpisodeDriver> {
        match url {
            Some(u) => Box::new(HttpDriver::new(u, token.clone()).expect("checked above")),
            None => Box::new(LocalDriver::new(suite.clone(), seed)),
        }
    };
    let settings = RunSettings {
        mode,
        budget,
        history_window,
        seed,
    };
    let mut records = Vec::new();
    let mut write_error = None;
    let errors = run_suite(
        &stored,
        &resolved.agent,
        &settings,
        k,
        resolved.parallel,
        &|| make_driver(&url),
        &mut |rec| {
            if let Err(e) = writer.append(&rec) {
                write_error.get_or_insert(e);
            }
            records.push(rec);
        },
    );
    if let Some(e) = write_error {
        return io_fail(e);
    }
    let report = build_report(&[LoadedRun {
        dir: out.clone(),
        meta: Some(meta),
        records,
    }]);
    print!("{}", report.to_text());
    println!("trajectories: {}", out.join(TRAJECTORY_FILE).display());
    if !errors.is_empty() {
        for (inst, run, e) in &errors {
            eprintln!("{inst} run {run}: {e}");
        }
        return io_fail(format!("{} episode(s) failed to run", errors.len()));
    }
    EXIT_OK
}

#[derive(Serialize)]
struct ReplayResolved {
    trajectory: PathBuf,
    suite: PathBuf,
}

pub fn replay(a: ReplayArgs, f: ReplayFile) -> u8 {
    let Some(mut path) = a.trajectory.or(f.trajectory) else {
        return usage("replay needs --trajectory");
    };
    if path.is_dir() {
        path = path.join(TRAJECTORY_FILE);
    }
    let Some(suite_dir) = a.suite.or(f.suite) else {
        return usage("replay needs --suite");
    };
    print_resolved(
        "replay",
        &ReplayResolved {
            trajectory: path.clone(),
            suite: suite_dir.clone(),
        },
    );
    let records = match read_trajectories(&path) {
        Ok(r) => r,
        Err(e) => return io_fail(e),
    };
    let suite = match load_dataset(&suite_dir) {
        Ok(s) => suite_of(&s),
        Err(e) => return io_fail(e),
    };
    for (n, rec) in records.iter().enumerate() {
        let Some(inst) = suite.get(&rec.instance_id) else {
            return io_fail(format!("record {n}: instance {} not in suite", rec.instance_id));
        };
        let ep = match replay_actions(
            inst.clone(),
            EpisodeConfig::with_budget(rec.budget),
            rec.actions.iter().map(|s| s.action.clone()),
        ) {
            Ok(ep) => ep,
            Err(e) => {
                println!(
                    "record {n} ({} {}): cannot replay: {e}",
                    rec.instance_id, rec.episode_id
                );
                return EXIT_MISMATCH;
            }
        };
        if let Some(step) = first_divergence(&ep, &rec.actions) {
            println!(
                "record {n} ({} {}): diverges at step {step}: {}",
                rec.instance_id,
                rec.episode_id,
                rec.actions
                    .get(step)
                    .and_then(|s| serde_json::to_string(&s.action).ok())
                    .unwrap_or_else(|| "<end of log>".into())
            );
            return EXIT_MISMATCH;
        }
        if ep.text_grid() != rec.final_grid || ep.status() != rec.final_status {
            println!(
                "record {n} ({} {}): final state differs (status {} vs recorded {})",
                rec.instance_id,
                rec.episode_id,
                ep.status(),
                rec.final_status
            );
            return EXIT_MISMATCH;
        }
    }
    println!("{} trajectories replayed identically", records.len());
    EXIT_OK
}

#[derive(Serialize)]
struct ReportResolved {
    runs: PathBuf,
    csv: PathBuf,
}

pub fn report(a: ReportArgs, f: ReportFile) -> u8 {
    let Some(runs_dir) = a.runs.or(f.runs) else {
        return usage("report needs --runs");
    };
    let csv = a.csv.or(f.csv).unwrap_or_else(|| runs_dir.join("report.csv"));
    print_resolved(
        "report",
        &ReportResolved {
            runs: runs_dir.clone(),
            csv: csv.clone(),
        },
    );
    let runs = match load_runs(&runs_dir) {
        Ok(r) => r,
        Err(e) => return io_fail(e),
    };
    let report = build_report(&runs);
    if report.rows.is_empty() {
        eprintln!("no completed runs under {}", runs_dir.display());
        return EXIT_SHORTFALL;
    }
    print!("{}", report.to_text());
    if let Err(e) = write_file(&csv, report.to_csv().as_bytes()) {
        return io_fail(format!("{}: {e}", csv.display()));
    }
    println!("csv: {}", csv.display());
    EXIT_OK
}

fn write_file(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(p)?;
    }
    std::fs::write(path, bytes)
}
