//! Interactive and one-shot episode loops, and suite runs over
//! (task, sample) cells.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::env::{sample_budget, Action, Observation, Status, MAX_BUDGET};
use crate::puzzle::{PuzzleInstance, StoredPuzzle, SCHEMA_VERSION};

use super::agent::{Agent, AgentConfig, AgentError, Usage};
use super::driver::{DriverError, EpisodeDriver, EpisodeResult};
use super::prompt::{instruction, parse_action, parse_plan, window, HistoryTurn, ParseError, Prompt};
use super::{EvalMode, TrajectoryRecord};

/// View sent in one-shot mode.
pub const ONE_SHOT_VIEW: &str = "iso";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunSettings {
    pub mode: EvalMode,
    /// Fixed budget; `None` draws one per cell from the default range.
    pub budget: Option<u32>,
    pub history_window: usize,
    pub seed: u64,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            mode: EvalMode::Interactive,
            budget: None,
            history_window: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Driver(#[from] DriverError),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

/// Seed for one (task, sample) cell.
pub fn cell_seed(seed: u64, instance_id: &str, run_index: u32) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for b in instance_id.bytes().chain(run_index.to_le_bytes()) {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn cell_budget(settings: &RunSettings, instance_id: &str, run_index: u32) -> u32 {
    settings.budget.unwrap_or_else(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(cell_seed(settings.seed, instance_id, run_index));
        sample_budget(&mut rng)
    })
}

struct Asked<T> {
    value: Result<T, String>,
    failures: u32,
}

/// Asks once, retries once on transport or parse failure.
fn ask<T>(
    agent: &mut dyn Agent,
    prompt: &Prompt,
    usage: &mut Usage,
    parse: impl Fn(&str) -> Result<T, ParseError>,
) -> Asked<T> {
    let mut failures = 0;
    let mut last = String::new();
    for _ in 0..2 {
        match agent.act(prompt) {
            Ok(reply) => {
                usage.tokens_in += reply.usage.tokens_in;
                usage.tokens_out += reply.usage.tokens_out;
                match parse(&reply.text) {
                    Ok(v) => {
                        return Asked {
                            value: Ok(v),
                            failures,
                        }
                    }
                    Err(e) => {
                        log::debug!("unparseable reply ({e}): {:?}", reply.text);
                        last = reply.text;
                    }
                }
            }
            Err(e) => {
                log::warn!("agent error: {e}");
                last = e.to_string();
            }
        }
        failures += 1;
    }
    Asked {
        value: Err(last),
        failures,
    }
}

fn prompt_for(
    inst: &PuzzleInstance,
    mode: EvalMode,
    turn: u32,
    history: Vec<HistoryTurn>,
    obs: &Observation,
) -> Prompt {
    let (views, text_grid) = match mode {
        EvalMode::Interactive => (obs.views.clone(), Some(obs.text_grid.clone())),
        EvalMode::OneShot => (
            obs.views
                .iter()
                .filter(|v| v.name == ONE_SHOT_VIEW)
                .take(1)
                .cloned()
                .collect(),
            None,
        ),
    };
    Prompt {
        mode,
        turn,
        instruction: instruction(inst.dims, mode),
        history,
        views,
        text_grid,
        color_map: obs.color_map.clone(),
        remaining: obs.remaining.clone(),
        steps_left: obs.steps_left,
        status: obs.status,
        box_dims: inst.dims,
    }
}

#[allow(clippy::too_many_arguments)]
fn record(
    instance_id: &str,
    inst: &PuzzleInstance,
    agent_id: String,
    mode: EvalMode,
    run_index: u32,
    res: EpisodeResult,
    usage: Usage,
    started: Instant,
    parse_failures: u32,
) -> TrajectoryRecord {
    TrajectoryRecord {
        schema_version: SCHEMA_VERSION,
        instance_id: instance_id.to_string(),
        episode_id: res.episode_id,
        mode,
        agent_id,
        run_index,
        difficulty: inst.difficulty,
        box_dims: inst.dims,
        budget: res.budget,
        minimal_steps: inst.minimal_steps as u32,
        steps: res.steps_taken,
        solved: res.status == Status::Solved,
        final_status: res.status,
        final_grid: res.final_grid,
        actions: res.steps,
        tokens_in: usage.tokens_in,
        tokens_out: usage.tokens_out,
        wall_time_s: started.elapsed().as_secs_f64(),
        parse_failures,
    }
}

/// Closed loop: instruction, the last `history_window` turns and the
/// current views go to the agent each turn until the episode ends.
pub fn run_episode(
    driver: &mut dyn EpisodeDriver,
    agent: &mut dyn Agent,
    stored: &StoredPuzzle,
    settings: &RunSettings,
    run_index: u32,
) -> Result<TrajectoryRecord, HarnessError> {
    let started = Instant::now();
    let inst = &stored.instance;
    let budget = cell_budget(settings, &stored.id, run_index);
    let start = driver.create(&stored.id, Some(budget))?;
    let mut obs = start.observation;
    let mut history: Vec<HistoryTurn> = Vec::new();
    let mut usage = Usage::default();
    let mut parse_failures = 0;
    // Every step costs budget; the cap only guards against misbehaving drivers.
    while obs.status == Status::Running && history.len() < 2 * MAX_BUDGET as usize {
        let turn = history.len() as u32 + 1;
        let prompt = prompt_for(
            inst,
            EvalMode::Interactive,
            turn,
            window(&history, settings.history_window),
            &obs,
        );
        let asked = ask(agent, &prompt, &mut usage, parse_action);
        parse_failures += asked.failures;
        let action = asked.value.unwrap_or_else(|raw| Action::Unparseable { raw });
        let out = match driver.step(&start.episode_id, &action) {
            Ok(o) => o,
            Err(DriverError::Conflict) => break,
            Err(e) => return Err(e.into()),
        };
        history.push(HistoryTurn {
            turn,
            action,
            result: out.result,
        });
        obs = out.observation;
    }
    let res = driver.result(&start.episode_id)?;
    Ok(record(
        &stored.id,
        inst,
        agent.id(),
        EvalMode::Interactive,
        run_index,
        res,
        usage,
        started,
        parse_failures,
    ))
}

/// One fixed view and the instruction; the reply must be a full plan,
/// executed without further observations. An unparseable plan executes
/// nothing.
pub fn run_one_shot(
    driver: &mut dyn EpisodeDriver,
    agent: &mut dyn Agent,
    stored: &StoredPuzzle,
    settings: &RunSettings,
    run_index: u32,
) -> Result<TrajectoryRecord, HarnessError> {
    let started = Instant::now();
    let inst = &stored.instance;
    let budget = cell_budget(settings, &stored.id, run_index);
    let start = driver.create(&stored.id, Some(budget))?;
    let prompt = prompt_for(inst, EvalMode::OneShot, 1, Vec::new(), &start.observation);
    let mut usage = Usage::default();
    let asked = ask(agent, &prompt, &mut usage, parse_plan);
    let plan = asked.value.unwrap_or_default();
    for action in &plan {
        match driver.step(&start.episode_id, action) {
            Ok(out) if out.result.status == Status::Running => {}
            Ok(_) | Err(DriverError::Conflict) => break,
            Err(e) => return Err(e.into()),
        }
    }
    let res = driver.result(&start.episode_id)?;
    Ok(record(
        &stored.id,
        inst,
        agent.id(),
        EvalMode::OneShot,
        run_index,
        res,
        usage,
        started,
        asked.failures,
    ))
}

pub fn run_cell(
    driver: &mut dyn EpisodeDriver,
    agent_cfg: &AgentConfig,
    stored: &StoredPuzzle,
    settings: &RunSettings,
    run_index: u32,
) -> Result<TrajectoryRecord, HarnessError> {
    let mut agent = agent_cfg.build(&stored.instance, cell_seed(settings.seed, &stored.id, run_index))?;
    let mut rec = match settings.mode {
        EvalMode::Interactive => run_episode(driver, agent.as_mut(), stored, settings, run_index)?,
        EvalMode::OneShot => run_one_shot(driver, agent.as_mut(), stored, settings, run_index)?,
    };
    rec.agent_id = agent_cfg.agent_id();
    Ok(rec)
}

pub type DriverFactory<'a> = dyn Fn() -> Box<dyn EpisodeDriver> + Sync + 'a;

/// Runs every (task, sample) cell with up to `parallelism` episodes in
/// flight; `sink` sees each record as it completes.
pub fn run_suite(
    suite: &[StoredPuzzle],
    agent_cfg: &AgentConfig,
    settings: &RunSettings,
    k: u32,
    parallelism: usize,
    make_driver: &DriverFactory<'_>,
    sink: &mut dyn FnMut(TrajectoryRecord),
) -> Vec<(String, u32, HarnessError)> {
    let cells: Vec<(usize, u32)> = (0..suite.len())
        .flat_map(|i| (0..k).map(move |j| (i, j)))
        .collect();
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel();
    let mut errors = Vec::new();
    std::thread::scope(|s| {
        for _ in 0..parallelism.max(1).min(cells.len().max(1)) {
            let tx = tx.clone();
            let cells = &cells;
            let next = &next;
            s.spawn(move || {
                let mut driver = make_driver();
                loop {
                    let n = next.fetch_add(1, Ordering::SeqCst);
                    let Some(&(i, j)) = cells.get(n) else { break };
                    let out = run_cell(driver.as_mut(), agent_cfg, &suite[i], settings, j);
                    if tx.send((i, j, out)).is_err() {
                        break;
                    }
                }
            });
        }
        drop(tx);
        for (i, j, out) in rx {
            match out {
                Ok(rec) => sink(rec),
                Err(e) => errors.push((suite[i].id.clone(), j, e)),
            }
        }
    });
    errors
}
