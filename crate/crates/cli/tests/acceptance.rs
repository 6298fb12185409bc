//! One PASS/FAIL line per acceptance criterion. Runs without the libtest
//! harness so the lines always reach the output.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::HashSet;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::routing::post;
use axum::{Json, Router};
use forge_core::assembly::{simulate_insertion, AssemblyPlan, RemovalMode};
use forge_core::cover::{build_cover_instance, solve, SolveStatus, DEFAULT_NODE_BUDGET};
use forge_core::env::{first_divergence, replay, EpisodeConfig};
use forge_core::eval::agent::{AgentConfig, AgentKind};
use forge_core::eval::driver::{suite_of, LocalDriver};
use forge_core::eval::harness::{run_suite, RunSettings};
use forge_core::eval::metrics::{avg_steps_solved, dist2opt, norm_dist, Outcome};
use forge_core::eval::select::{best_of_k, Sample, VerifiedSelector};
use forge_core::eval::store::{read_trajectories, TrajectoryWriter};
use forge_core::eval::{EvalMode, TrajectoryRecord};
use forge_core::gen::{generate_batch, generate_one_staged, verify_instance, BatchSpec, GenConfig};
use forge_core::puzzle::{load_dataset, StoredPuzzle};
use forge_core::voxel::{puzzle_signature, rotate, Coord, Rotation, Shape};
use forge_core::{BoxDims, Difficulty, PuzzleInstance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

type Verdict = Result<String, String>;
type Check<'a> = Box<dyn Fn() -> Verdict + 'a>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn dims(s: &str) -> BoxDims {
    s.parse().unwrap()
}

fn generate(
    b: &str,
    mode: Difficulty,
    seed: u64,
    linear: bool,
) -> Result<(PuzzleInstance, GenConfig), String> {
    let mut cfg = GenConfig::new(dims(b), mode, seed);
    cfg.require_linear_assembly = linear;
    let g = generate_one_staged(&cfg, &mut ChaCha8Rng::seed_from_u64(seed))
        .map_err(|e| format!("{b} {mode} seed {seed}: generation failed: {e:?}"))?;
    Ok((g.instance, cfg))
}

fn forge(args: &[&str]) -> Result<std::process::Output, String> {
    Command::new(env!("CARGO_BIN_EXE_forge"))
        .args(args)
        .env_remove("FORGE_TOKEN")
        .output()
        .map_err(|e| e.to_string())
}

fn metric_examples() -> Verdict {
    let started = Instant::now();
    let solved = |steps, minimal_steps| Outcome {
        solved: true,
        steps,
        minimal_steps,
        ..Default::default()
    };
    let got = [
        dist2opt(&[solved(5, 3)]),
        norm_dist(&[solved(15, 10)]),
        norm_dist(&[solved(4, 3)]),
        avg_steps_solved(&[solved(6, 3)]),
    ];
    let want = [Some(2.0), Some(0.5), Some(1.0 / 3.0), Some(6.0)];
    ensure(got == want, || format!("got {got:?}, want {want:?}"))?;
    ensure(started.elapsed() < Duration::from_secs(1), || {
        "slower than 1 s".into()
    })?;
    Ok("Dist2Opt 2, NormDist 0.5 and 1/3, AvgSteps 6".into())
}

fn solver_oracle() -> Verdict {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let boxes = common::small_boxes();
    let (mut agree, mut sat) = (0, 0);
    for case in 0..100 {
        let d = boxes[rng.random_range(0..boxes.len())];
        let v = d.volume();
        let pieces: Vec<Shape> = if case % 2 == 0 {
            common::random_partition(d, rng.random_range(2..=(v / 2).clamp(2, 4)), &mut rng)
        } else {
            let mut left = v;
            let mut ps = Vec::new();
            while left > 0 {
                let n = rng.random_range(1..=left.min(5));
                ps.push(common::random_polycube(n, &mut rng));
                left -= n;
            }
            ps
        };
        let res = solve(
            &build_cover_instance(&pieces, d).map_err(|e| e.to_string())?,
            DEFAULT_NODE_BUDGET,
        )
        .map_err(|e| e.to_string())?;
        let dlx = res.status == SolveStatus::Solved;
        if dlx == common::naive_solvable(&pieces, d) {
            agree += 1;
        }
        sat += dlx as usize;
    }
    let secs = started.elapsed().as_secs_f64();
    ensure(agree == 100, || format!("{agree}/100 agree"))?;
    ensure(secs < 60.0, || format!("took {secs:.1} s"))?;
    Ok(format!("100/100 agree ({sat} solvable), {secs:.2} s"))
}

fn generator_soundness() -> Verdict {
    let started = Instant::now();
    let mut passed = 0;
    for (b, mode) in [
        ("2x2x3", Difficulty::Easy),
        ("2x3x3", Difficulty::Mid),
        ("3x3x4", Difficulty::Hard),
    ] {
        for seed in 0..10 {
            let (inst, cfg) = generate(b, mode, 1000 + seed, true)?;
            let report = verify_instance(&inst, &cfg);
            ensure(report.passed(), || format!("{b} {mode} seed {seed}: {report:?}"))?;
            passed += 1;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    ensure(secs < 600.0, || format!("took {secs:.0} s"))?;
    Ok(format!("{passed}/30 re-verified, {secs:.1} s"))
}

fn dedup(work: &Path) -> Verdict {
    let out = work.join("dedup");
    let spec = BatchSpec {
        sizes: vec![dims("2x3x3"), dims("2x3x4")],
        modes: vec![Difficulty::Mid],
        per_cell_target: 10,
        template: GenConfig::new(dims("2x3x3"), Difficulty::Mid, 5),
        out_dir: out.clone(),
        workers: 4,
        max_call_factor: 10,
    };
    let first = generate_batch(&spec).map_err(|e| e.to_string())?;
    ensure(first.accepted() == 20, || {
        format!("first batch accepted {}", first.accepted())
    })?;
    let second = generate_batch(&spec).map_err(|e| e.to_string())?;
    ensure(second.accepted() == 0, || {
        format!("rerun added {}", second.accepted())
    })?;
    let stored = load_dataset(&out).map_err(|e| e.to_string())?;
    ensure(stored.len() == 20, || {
        format!("{} stored after rerun", stored.len())
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut same = 0;
    for s in &stored {
        let mut moved: Vec<Shape> = s
            .instance
            .shapes()
            .iter()
            .map(|p| {
                let r = Rotation::from_index(rng.random_range(0..24)).unwrap();
                rotate(p, &r).translate(Coord::new(
                    rng.random_range(-5..5),
                    rng.random_range(-5..5),
                    rng.random_range(-5..5),
                ))
            })
            .collect();
        moved.reverse();
        if puzzle_signature(&moved).map_err(|e| e.to_string())? == s.instance.signature {
            same += 1;
        }
    }
    ensure(same == 20, || format!("{same}/20 signatures reproduced"))?;
    Ok("rerun added 0; 20/20 rotated signatures match".into())
}

/// Inserts pieces in plan order, each sliding in from outside the box,
/// and checks the result is exactly the box.
fn reinsert(placed: &[Vec<Coord>], plan: &AssemblyPlan, d: BoxDims) -> bool {
    let mut occupied: HashSet<Coord> = HashSet::new();
    for step in &plan.order {
        let cells = &placed[step.piece];
        let dir = step.direction.step();
        let mut k = 0;
        while cells
            .iter()
            .any(|c| d.contains(c.offset(Coord::new(dir.x * k, dir.y * k, dir.z * k))))
        {
            k += 1;
        }
        for j in (0..=k).rev() {
            let by = Coord::new(dir.x * j, dir.y * j, dir.z * j);
            if cells.iter().any(|c| occupied.contains(&c.offset(by))) {
                return false;
            }
        }
        occupied.extend(cells.iter().copied());
    }
    occupied.len() == d.volume() && occupied.iter().all(|&c| d.contains(c))
}

fn assembly_reversal() -> Verdict {
    let mut ok = 0;
    let tiers = [
        ("2x2x3", Difficulty::Easy),
        ("2x3x3", Difficulty::Mid),
        ("2x3x4", Difficulty::Mid),
        ("3x3x4", Difficulty::Hard),
    ];
    for n in 0..50u64 {
        let (b, mode) = tiers[n as usize % tiers.len()];
        let (inst, _) = generate(b, mode, 500 + n, true)?;
        ensure(inst.assembly_order.len() == inst.pieces.len(), || {
            format!("{b} seed {n}: no plan")
        })?;
        let placed = inst.solved_cells().ok_or("stored solution does not realize")?;
        let plan = AssemblyPlan {
            order: inst.assembly_order.clone(),
            mode: RemovalMode::FullSlide,
        };
        if simulate_insertion(&placed, &plan, inst.dims) && reinsert(&placed, &plan, inst.dims) {
            ok += 1;
        }
    }
    ensure(ok == 50, || format!("{ok}/50 reconstructed"))?;
    Ok("50/50 reversed plans rebuild the box collision-free".into())
}

fn oracle_end_to_end(work: &Path) -> Verdict {
    let data = work.join("e2e-data");
    let runs = work.join("e2e-runs");
    let d = data.to_str().unwrap();
    for (b, mode, count) in [
        ("2x2x3", "easy", "2"),
        ("2x3x3", "mid", "4"),
        ("3x3x4", "hard", "2"),
    ] {
        let o = forge(&[
            "gen", "--box", b, "--mode", mode, "--count", count, "--seed", "9", "--out", d,
        ])?;
        ensure(o.status.success(), || {
            format!("gen {b} {mode}: {}", String::from_utf8_lossy(&o.stderr))
        })?;
    }
    let run = runs.join("oracle");
    let o = forge(&[
        "eval",
        "--suite",
        d,
        "--agent",
        "oracle",
        "--via-service",
        "--seed",
        "3",
        "--out",
        run.to_str().unwrap(),
    ])?;
    ensure(o.status.success(), || {
        format!("eval: {}", String::from_utf8_lossy(&o.stderr))
    })?;
    ensure(run.join("service").join("episodes").is_dir(), || {
        "episodes did not go through the service".into()
    })?;
    let o = forge(&["report", "--runs", runs.to_str().unwrap()])?;
    ensure(o.status.success(), || {
        format!("report: {}", String::from_utf8_lossy(&o.stderr))
    })?;
    let csv = std::fs::read_to_string(runs.join("report.csv")).map_err(|e| e.to_string())?;
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let row: Vec<&str> = lines
        .find(|l| l.starts_with("oracle,"))
        .ok_or("no oracle row")?
        .split(',')
        .collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .map(|i| row[i])
            .unwrap_or("?")
    };
    let (pass, d2o, nd, n) = (col("Pass@1"), col("Dist2Opt"), col("N.Dist"), col("N"));
    ensure(pass == "100.0" && d2o == "0.00" && nd == "0.00", || {
        format!("Pass@1 {pass}, Dist2Opt {d2o}, N.Dist {nd}")
    })?;
    Ok(format!(
        "{n} tasks over HTTP: Pass@1 {pass}%, Dist2Opt {d2o}, NormDist {nd}"
    ))
}

/// A chat-completions endpoint that records every request. Single actions
/// are always rejected; plans are a bare `done`.
struct FakeModel {
    requests: Arc<Mutex<Vec<Value>>>,
    url: String,
    _stop: tokio::sync::oneshot::Sender<()>,
}

fn fake_model() -> FakeModel {
    let requests = Arc::new(Mutex::new(Vec::new()));
    let seen = requests.clone();
    let app = Router::new().route(
        "/v1/chat/completions",
        post(move |Json(body): Json<Value>| {
            let seen = seen.clone();
            async move {
                let (text, _) = user_content(&body);
                seen.lock().unwrap().push(body);
                let reply = if text.contains("JSON array") {
                    r#"[{"kind":"done"}]"#
                } else {
                    r#"{"kind":"remove","color":"no-such-colour"}"#
                };
                Json(json!({
                    "choices": [{"message": {"role": "assistant", "content": reply}}],
                    "usage": {"prompt_tokens": 100, "completion_tokens": 10},
                }))
            }
        }),
    );
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .unwrap();
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    std::thread::spawn(move || {
        rt.block_on(async move {
            let _ = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
        })
    });
    FakeModel {
        requests,
        url: format!("http://{addr}/v1/chat/completions"),
        _stop: tx,
    }
}

fn user_content(req: &Value) -> (String, usize) {
    let content = req["messages"][1]["content"]
        .as_array()
        .cloned()
        .unwrap_or_default();
    let text = content
        .iter()
        .filter(|c| c["type"] == "text")
        .filter_map(|c| c["text"].as_str())
        .collect::<Vec<_>>()
        .join("\n");
    let images = content.iter().filter(|c| c["type"] == "image_url").count();
    (text, images)
}

fn history_turns(text: &str) -> Vec<u32> {
    text.lines()
        .filter_map(|l| l.strip_prefix("turn "))
        .filter_map(|l| l.split(':').next()?.parse().ok())
        .collect()
}

fn run_with_model(
    stored: &[StoredPuzzle],
    model: &FakeModel,
    mode: EvalMode,
    seed: u64,
) -> Result<Vec<TrajectoryRecord>, String> {
    let mut cfg = AgentConfig::of_kind(AgentKind::Remote);
    cfg.endpoint = Some(model.url.clone());
    cfg.model = Some("capture".into());
    let settings = RunSettings {
        mode,
        budget: None,
        history_window: 5,
        seed,
    };
    let suite = Arc::new(suite_of(stored));
    let mut records = Vec::new();
    let errors = run_suite(
        stored,
        &cfg,
        &settings,
        1,
        1,
        &|| Box::new(LocalDriver::new(suite.clone(), seed)),
        &mut |r| records.push(r),
    );
    ensure(errors.is_empty(), || format!("{errors:?}"))?;
    Ok(records)
}

fn protocol_fidelity(work: &Path) -> Verdict {
    let data = work.join("protocol");
    let d = data.to_str().unwrap();
    let o = forge(&[
        "gen", "--box", "2x3x3", "--mode", "mid", "--count", "4", "--seed", "12", "--out", d,
    ])?;
    ensure(o.status.success(), || {
        String::from_utf8_lossy(&o.stderr).into_owned()
    })?;
    let stored = load_dataset(&data).map_err(|e| e.to_string())?;

    let model = fake_model();
    let records = run_with_model(&stored, &model, EvalMode::Interactive, 8)?;
    let requests: Vec<Value> = std::mem::take(&mut *model.requests.lock().unwrap());
    let mut budgets = Vec::new();
    let mut i = 0;
    for rec in &records {
        ensure((30..=60).contains(&rec.budget), || {
            format!("budget {} outside [30,60]", rec.budget)
        })?;
        budgets.push(rec.budget);
        // Every reply is rejected, so each episode asks exactly `budget` times.
        let episode = &requests[i..i + rec.budget as usize];
        i += rec.budget as usize;
        for (j, req) in episode.iter().enumerate() {
            let turn = j as u32 + 1;
            let (text, _) = user_content(req);
            let want: Vec<u32> = (turn.saturating_sub(5).max(1)..turn).collect();
            let got = history_turns(&text);
            ensure(got == want, || {
                format!("turn {turn} carried history {got:?}, want {want:?}")
            })?;
        }
        let (nine, _) = user_content(&episode[8]);
        ensure(history_turns(&nine) == [4, 5, 6, 7, 8], || {
            "turn 9 does not carry turns 4-8".into()
        })?;
    }
    ensure(i == requests.len(), || {
        format!("{} requests for {i} steps", requests.len())
    })?;
    let distinct: HashSet<u32> = budgets.iter().copied().collect();

    let records = run_with_model(&stored, &model, EvalMode::OneShot, 8)?;
    let requests: Vec<Value> = std::mem::take(&mut *model.requests.lock().unwrap());
    ensure(requests.len() == records.len(), || {
        format!(
            "{} one-shot requests for {} episodes",
            requests.len(),
            records.len()
        )
    })?;
    for req in &requests {
        let (text, images) = user_content(req);
        ensure(images == 1, || {
            format!("one-shot request carried {images} images")
        })?;
        ensure(history_turns(&text).is_empty(), || {
            "one-shot request carried history".into()
        })?;
    }
    Ok(format!(
        "budgets {budgets:?} ({} distinct) in [30,60]; window 5 on every turn; one-shot sends 1 image x {}",
        distinct.len(),
        requests.len()
    ))
}

fn selection_monotonicity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for trial in 0..500 {
        let p = rng.random_range(0.0..1.0);
        let tasks: Vec<Vec<Sample>> = (0..rng.random_range(1..20))
            .map(|_| {
                (0..4)
                    .map(|_| Sample {
                        solved: rng.random_bool(p),
                        steps: rng.random_range(1..40),
                    })
                    .collect()
            })
            .collect();
        let at = |k| best_of_k(&tasks, k, &VerifiedSelector).unwrap();
        let (one, two, four) = (at(1), at(2), at(4));
        ensure(
            one.pass_at_k <= two.pass_at_k && two.pass_at_k <= four.pass_at_k,
            || {
                format!(
                    "trial {trial}: pass@1 {} pass@2 {} pass@4 {}",
                    one.pass_at_k, two.pass_at_k, four.pass_at_k
                )
            },
        )?;
        ensure(one.avg_at_k == one.pass_at_k, || {
            format!(
                "trial {trial}: avg@1 {} != pass@1 {}",
                one.avg_at_k, one.pass_at_k
            )
        })?;
    }
    Ok("500 synthetic K=4 suites: pass@1 <= pass@2 <= pass@4, avg@1 = pass@1".into())
}

fn replay_determinism(work: &Path) -> Verdict {
    let data = work.join("replay");
    let d = data.to_str().unwrap();
    for (b, mode) in [("2x2x3", "easy"), ("2x3x3", "mid"), ("2x3x4", "mid")] {
        let o = forge(&[
            "gen", "--box", b, "--mode", mode, "--count", "2", "--seed", "21", "--out", d,
        ])?;
        ensure(o.status.success(), || {
            String::from_utf8_lossy(&o.stderr).into_owned()
        })?;
    }
    let stored = load_dataset(&data).map_err(|e| e.to_string())?;
    let suite = Arc::new(suite_of(&stored));
    let k = 100u32.div_ceil(stored.len() as u32);
    let path = work.join("replay-run").join("trajectories.jsonl");
    let mut writer = TrajectoryWriter::open(&path).map_err(|e| e.to_string())?;
    let mut n = 0;
    for (mode, agent) in [
        (EvalMode::Interactive, AgentKind::Random),
        (EvalMode::OneShot, AgentKind::Oracle),
    ] {
        let settings = RunSettings {
            mode,
            seed: 6,
            ..RunSettings::default()
        };
        let runs = if mode == EvalMode::Interactive { k } else { 1 };
        let errors = run_suite(
            &stored,
            &AgentConfig::of_kind(agent),
            &settings,
            runs,
            4,
            &|| Box::new(LocalDriver::new(suite.clone(), 6)),
            &mut |r| {
                if n < 100 {
                    writer.append(&r).unwrap();
                    n += 1;
                }
            },
        );
        ensure(errors.is_empty(), || format!("{errors:?}"))?;
    }
    let records = read_trajectories(&path).map_err(|e| e.to_string())?;
    ensure(records.len() == 100, || {
        format!("recorded {} trajectories", records.len())
    })?;
    let mut same = 0;
    for rec in &records {
        let inst = suite.get(&rec.instance_id).ok_or("unknown instance")?;
        let ep = replay(
            inst.clone(),
            EpisodeConfig::with_budget(rec.budget),
            rec.actions.iter().map(|s| s.action.clone()),
        )
        .map_err(|e| e.to_string())?;
        if first_divergence(&ep, &rec.actions).is_none()
            && ep.text_grid() == rec.final_grid
            && ep.status() == rec.final_status
        {
            same += 1;
        }
    }
    ensure(same == 100, || format!("{same}/100 replayed identically"))?;
    Ok("100/100 replay to identical occupancy and status".into())
}

fn main() -> ExitCode {
    let work = tempfile::tempdir().expect("temp dir");
    let w = work.path();
    let criteria: Vec<(&str, Check)> = vec![
        ("metric worked examples", Box::new(metric_examples)),
        ("solver oracle equivalence", Box::new(solver_oracle)),
        ("generator soundness", Box::new(generator_soundness)),
        ("dedup", Box::new(|| dedup(w))),
        ("assembly reversal", Box::new(assembly_reversal)),
        ("oracle agent end-to-end", Box::new(|| oracle_end_to_end(w))),
        ("protocol fidelity", Box::new(|| protocol_fidelity(w))),
        ("selection monotonicity", Box::new(selection_monotonicity)),
        ("replay determinism", Box::new(|| replay_determinism(w))),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let started = Instant::now();
        let out = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = started.elapsed().as_secs_f64();
        match out {
            Ok(detail) => println!("PASS {name}: {detail} [{secs:.1}s]"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why} [{secs:.1}s]");
            }
        }
    }
    println!(
        "acceptance: {}/{} criteria pass",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
