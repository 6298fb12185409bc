//! Evaluation: episode orchestration, agents, metrics, multi-sample
//! selection, calibration, trajectory storage and reporting.

pub mod agent;
pub mod calibration;
pub mod driver;
pub mod harness;
pub mod metrics;
pub mod prompt;
pub mod report;
pub mod select;
pub mod store;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::env::{Status, StepRecord};
use crate::puzzle::Difficulty;
use crate::voxel::BoxDims;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EvalMode {
    #[default]
    #[serde(rename = "interactive")]
    Interactive,
    #[serde(rename = "one-shot", alias = "oneshot")]
    OneShot,
}

impl EvalMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalMode::Interactive => "interactive",
            EvalMode::OneShot => "one-shot",
        }
    }
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EvalMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "interactive" => Ok(EvalMode::Interactive),
            "oneshot" | "one-shot" => Ok(EvalMode::OneShot),
            _ => Err(format!("unknown mode {s:?}")),
        }
    }
}

/// One episode as stored in the trajectory log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub schema_version: u32,
    pub instance_id: String,
    pub episode_id: String,
    pub mode: EvalMode,
    pub agent_id: String,
    pub run_index: u32,
    pub difficulty: Difficulty,
    #[serde(rename = "box")]
    pub box_dims: BoxDims,
    pub budget: u32,
    pub minimal_steps: u32,
    pub steps: u32,
    pub solved: bool,
    pub final_status: Status,
    pub final_grid: String,
    pub actions: Vec<StepRecord>,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub wall_time_s: f64,
    pub parse_failures: u32,
}

impl TrajectoryRecord {
    pub fn outcome(&self) -> metrics::Outcome {
        metrics::Outcome {
            solved: self.solved,
            steps: self.steps,
            minimal_steps: self.minimal_steps,
            tokens_in: self.tokens_in,
            tokens_out: self.tokens_out,
        }
    }

    pub fn sample(&self) -> select::Sample {
        select::Sample {
            solved: self.solved,
            steps: self.steps,
        }
    }
}
