//! Episode drivers: the harness talks to episodes through this interface,
//! either in-process or over HTTP.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{
    sample_budget, Action, ActionResult, Episode, EpisodeConfig, Observation, Status, StepRecord,
};
use crate::puzzle::{Difficulty, PuzzleInstance, StoredPuzzle, SCHEMA_VERSION};
use crate::render::ViewKind;
use crate::voxel::BoxDims;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DriverError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("episode already ended")]
    Conflict,
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error("internal: {0}")]
    Internal(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EpisodeStart {
    pub episode_id: String,
    pub budget: u32,
    pub observation: Observation,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepOutcome {
    pub result: ActionResult,
    pub observation: Observation,
}

/// Server-side view of an episode, finished or not.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub schema_version: u32,
    pub episode_id: String,
    pub instance_id: String,
    pub status: Status,
    pub running: bool,
    pub solved: bool,
    pub steps_taken: u32,
    pub budget: u32,
    pub minimal_steps: u32,
    pub difficulty: Difficulty,
    #[serde(rename = "box")]
    pub box_dims: BoxDims,
    pub final_grid: String,
    pub steps: Vec<StepRecord>,
    /// Cut short by a service restart; reported as failed.
    #[serde(default)]
    pub interrupted: bool,
}

impl EpisodeResult {
    /// A finished episode, or a running one marked as interrupted.
    pub fn interrupted(mut self) -> Self {
        if self.running {
            self.running = false;
            self.status = Status::Failed;
            self.interrupted = true;
        }
        self
    }

    pub fn of(episode_id: &str, instance_id: &str, ep: &Episode) -> Self {
        EpisodeResult {
            schema_version: SCHEMA_VERSION,
            episode_id: episode_id.to_string(),
            instance_id: instance_id.to_string(),
            status: ep.status(),
            running: ep.status() == Status::Running,
            solved: ep.status() == Status::Solved,
            steps_taken: ep.steps_taken(),
            budget: ep.budget(),
            minimal_steps: ep.instance().minimal_steps as u32,
            difficulty: ep.instance().difficulty,
            box_dims: ep.instance().dims,
            final_grid: ep.text_grid(),
            steps: ep.log().to_vec(),
            interrupted: false,
        }
    }
}

pub trait EpisodeDriver: Send {
    /// `budget: None` lets the driver pick its default.
    fn create(&mut self, instance_id: &str, budget: Option<u32>) -> Result<EpisodeStart, DriverError>;
    fn step(&mut self, episode_id: &str, action: &Action) -> Result<StepOutcome, DriverError>;
    fn result(&mut self, episode_id: &str) -> Result<EpisodeResult, DriverError>;
}

pub type Suite = BTreeMap<String, Arc<PuzzleInstance>>;

pub fn suite_of(stored: &[StoredPuzzle]) -> Suite {
    stored
        .iter()
        .map(|s| (s.id.clone(), Arc::new(s.instance.clone())))
        .collect()
}

/// In-process episodes.
pub struct LocalDriver {
    suite: Arc<Suite>,
    episodes: HashMap<String, (String, Episode)>,
    next_id: u64,
    rng: ChaCha8Rng,
}

impl LocalDriver {
    pub fn new(suite: Arc<Suite>, seed: u64) -> Self {
        LocalDriver {
            suite,
            episodes: HashMap::new(),
            next_id: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl EpisodeDriver for LocalDriver {
    fn create(&mut self, instance_id: &str, budget: Option<u32>) -> Result<EpisodeStart, DriverError> {
        let inst = self
            .suite
            .get(instance_id)
            .ok_or_else(|| DriverError::NotFound(instance_id.to_string()))?
            .clone();
        let budget = budget.unwrap_or_else(|| sample_budget(&mut self.rng));
        let ep = Episode::new(inst, EpisodeConfig::with_budget(budget))
            .map_err(|e| DriverError::BadRequest(e.to_string()))?;
        self.next_id += 1;
        let id = format!("local-{}", self.next_id);
        let observation = ep.observe(&ViewKind::ALL);
        self.episodes.insert(id.clone(), (instance_id.to_string(), ep));
        Ok(EpisodeStart {
            episode_id: id,
            budget,
            observation,
        })
    }

    fn step(&mut self, episode_id: &str, action: &Action) -> Result<StepOutcome, DriverError> {
        let (_, ep) = self
            .episodes
            .get_mut(episode_id)
            .ok_or_else(|| DriverError::NotFound(episode_id.to_string()))?;
        if ep.status() != Status::Running {
            return Err(DriverError::Conflict);
        }
        let result = ep.apply(action.clone());
        Ok(StepOutcome {
            result,
            observation: ep.observe(&ViewKind::ALL),
        })
    }

    fn result(&mut self, episode_id: &str) -> Result<EpisodeResult, DriverError> {
        let (instance_id, ep) = self
            .episodes
            .get(episode_id)
            .ok_or_else(|| DriverError::NotFound(episode_id.to_string()))?;
        Ok(EpisodeResult::of(episode_id, instance_id, ep))
    }
}
