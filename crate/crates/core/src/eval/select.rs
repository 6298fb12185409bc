//! Multi-sample scoring: pass@k, avg@k and selector-based picks.
//!
//! Samples for a task are ordered by run index; `k` always refers to the
//! first `k` of them, so the sample sets are nested.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub solved: bool,
    pub steps: u32,
}

/// Picks one sample per task.
pub trait Selector {
    fn select(&self, samples: &[Sample]) -> usize;
}

/// Always the first sample; reduces to pass@1.
pub struct FirstSample;

impl Selector for FirstSample {
    fn select(&self, _: &[Sample]) -> usize {
        0
    }
}

/// Environment-verified choice: a solved sample if any, fewest steps among
/// those, earliest on ties.
pub struct VerifiedSelector;

impl Selector for VerifiedSelector {
    fn select(&self, samples: &[Sample]) -> usize {
        samples
            .iter()
            .enumerate()
            .min_by_key(|(i, s)| (!s.solved, s.steps, *i))
            .map_or(0, |(i, _)| i)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestOfK {
    pub k: usize,
    pub pass_at_k: f64,
    pub avg_at_k: f64,
    pub selected: f64,
    pub tasks: usize,
    /// Tasks with fewer than `k` samples, left out of every score.
    pub excluded: usize,
}

/// Scores `tasks` (each a run-ordered sample list) at `k`.
pub fn best_of_k(tasks: &[Vec<Sample>], k: usize, selector: &dyn Selector) -> Option<BestOfK> {
    if k == 0 {
        return None;
    }
    let mut pass = 0.0;
    let mut avg = 0.0;
    let mut sel = 0.0;
    let mut used = 0usize;
    let mut excluded = 0usize;
    for samples in tasks {
        if samples.len() < k {
            log::warn!("task with {} samples excluded from k={k} scoring", samples.len());
            excluded += 1;
            continue;
        }
        let head = &samples[..k];
        used += 1;
        if head.iter().any(|s| s.solved) {
            pass += 1.0;
        }
        avg += head.iter().filter(|s| s.solved).count() as f64 / k as f64;
        if head[selector.select(head).min(k - 1)].solved {
            sel += 1.0;
        }
    }
    if used == 0 {
        return None;
    }
    let n = used as f64;
    Some(BestOfK {
        k,
        pass_at_k: pass / n,
        avg_at_k: avg / n,
        selected: sel / n,
        tasks: used,
        excluded,
    })
}
