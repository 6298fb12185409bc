//! Difficulty tiers from human solve times.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const EASY_BELOW_S: f64 = 300.0;
pub const HARD_ABOVE_S: f64 = 900.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Easy,
    Medium,
    Hard,
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tier::Easy => "easy",
            Tier::Medium => "medium",
            Tier::Hard => "hard",
        })
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CalibrationError {
    #[error("solve time must be positive, got {0}")]
    NonPositive(f64),
}

/// Under 5 minutes is easy, 5 to 15 minutes inclusive is medium.
pub fn tier_for(seconds: f64) -> Result<Tier, CalibrationError> {
    if !seconds.is_finite() || seconds <= 0.0 {
        return Err(CalibrationError::NonPositive(seconds));
    }
    Ok(if seconds < EASY_BELOW_S {
        Tier::Easy
    } else if seconds <= HARD_ABOVE_S {
        Tier::Medium
    } else {
        Tier::Hard
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub schema_version: u32,
    pub instance_id: String,
    pub annotator: String,
    pub solve_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSummary {
    pub instance_id: String,
    pub annotators: usize,
    pub mean_time_s: f64,
    pub tier: Tier,
}

/// Mean over annotators (each annotator's latest record counts once).
pub fn summarize(instance_id: &str, records: &[CalibrationRecord]) -> Option<CalibrationSummary> {
    let mut latest: BTreeMap<&str, f64> = BTreeMap::new();
    for r in records.iter().filter(|r| r.instance_id == instance_id) {
        latest.insert(&r.annotator, r.solve_time_s);
    }
    if latest.is_empty() {
        return None;
    }
    let mean = latest.values().sum::<f64>() / latest.len() as f64;
    Some(CalibrationSummary {
        instance_id: instance_id.to_string(),
        annotators: latest.len(),
        mean_time_s: mean,
        tier: tier_for(mean).ok()?,
    })
}
