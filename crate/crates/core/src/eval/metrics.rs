//! Success, plan-efficiency and cost metrics over per-task outcomes.
//!
//! Efficiency metrics are defined over solved tasks only and come back as
//! `None` when nothing was solved; token and cost metrics are `None` when
//! their denominator is zero.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The slice of a trajectory the metrics need.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub solved: bool,
    pub steps: u32,
    pub minimal_steps: u32,
    pub tokens_in: u64,
    pub tokens_out: u64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("no tasks to score")]
    Empty,
    #[error("negative price")]
    NegativePrice,
}

pub fn pass_at_1(outcomes: &[Outcome]) -> Result<f64, MetricError> {
    if outcomes.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(solved_count(outcomes) as f64 / outcomes.len() as f64)
}

pub fn solved_count(outcomes: &[Outcome]) -> usize {
    outcomes.iter().filter(|o| o.solved).count()
}

fn mean_over_solved(outcomes: &[Outcome], f: impl Fn(&Outcome) -> f64) -> Option<f64> {
    let solved: Vec<&Outcome> = outcomes.iter().filter(|o| o.solved).collect();
    if solved.is_empty() {
        return None;
    }
    Some(solved.iter().map(|o| f(o)).sum::<f64>() / solved.len() as f64)
}

/// Extra steps beyond the minimal plan, clamped at zero.
pub fn overhead(steps: u32, minimal_steps: u32) -> u32 {
    steps.saturating_sub(minimal_steps)
}

pub fn normalized_overhead(steps: u32, minimal_steps: u32) -> f64 {
    overhead(steps, minimal_steps) as f64 / minimal_steps.max(1) as f64
}

pub fn avg_steps_solved(outcomes: &[Outcome]) -> Option<f64> {
    mean_over_solved(outcomes, |o| o.steps as f64)
}

pub fn dist2opt(outcomes: &[Outcome]) -> Option<f64> {
    mean_over_solved(outcomes, |o| overhead(o.steps, o.minimal_steps) as f64)
}

pub fn norm_dist(outcomes: &[Outcome]) -> Option<f64> {
    mean_over_solved(outcomes, |o| normalized_overhead(o.steps, o.minimal_steps))
}

pub fn solved_per_million_tokens(outcomes: &[Outcome]) -> Option<f64> {
    let tokens: u64 = outcomes.iter().map(|o| o.tokens_in + o.tokens_out).sum();
    (tokens > 0).then(|| solved_count(outcomes) as f64 / tokens as f64 * 1e6)
}

/// USD per 1K tokens.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pricing {
    pub p_in: f64,
    pub p_out: f64,
}

impl Pricing {
    pub fn new(p_in: f64, p_out: f64) -> Result<Pricing, MetricError> {
        if p_in < 0.0 || p_out < 0.0 || p_in.is_nan() || p_out.is_nan() {
            return Err(MetricError::NegativePrice);
        }
        Ok(Pricing { p_in, p_out })
    }

    pub fn cost(&self, tokens_in: u64, tokens_out: u64) -> f64 {
        (self.p_in * tokens_in as f64 + self.p_out * tokens_out as f64) / 1000.0
    }
}

/// Per-task costs and Solved/USD (`None` when the total cost is zero).
pub fn cost_and_solved_per_usd(outcomes: &[Outcome], pricing: &Pricing) -> (Vec<f64>, Option<f64>) {
    let costs: Vec<f64> = outcomes
        .iter()
        .map(|o| pricing.cost(o.tokens_in, o.tokens_out))
        .collect();
    let total: f64 = costs.iter().sum();
    let per_usd = (total > 0.0).then(|| solved_count(outcomes) as f64 / total);
    (costs, per_usd)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn o(solved: bool, steps: u32, minimal_steps: u32) -> Outcome {
        Outcome {
            solved,
            steps,
            minimal_steps,
            ..Default::default()
        }
    }

    #[test]
    fn pass_rates() {
        let r = pass_at_1(&[o(true, 3, 3), o(false, 9, 3), o(true, 4, 3)]).unwrap();
        assert!((r - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(pass_at_1(&[o(true, 1, 1); 4]).unwrap(), 1.0);
        assert_eq!(pass_at_1(&[o(false, 1, 1); 4]).unwrap(), 0.0);
        assert_eq!(pass_at_1(&[]), Err(MetricError::Empty));
    }

    #[test]
    fn efficiency_over_solved_only() {
        assert_eq!(
            avg_steps_solved(&[o(true, 4, 3), o(true, 6, 3), o(false, 60, 3)]),
            Some(5.0)
        );
        assert_eq!(avg_steps_solved(&[o(false, 4, 3)]), None);
        assert_eq!(dist2opt(&[o(true, 3, 3)]), Some(0.0));
        assert_eq!(dist2opt(&[o(true, 2, 3)]), Some(0.0));
        assert_eq!(norm_dist(&[o(true, 3, 3)]), Some(0.0));
        assert_eq!(norm_dist(&[]), None);
        assert_eq!(normalized_overhead(1, 0), 1.0);
    }

    #[test]
    fn token_efficiency() {
        let mut a = o(true, 3, 3);
        a.tokens_in = 60_000;
        a.tokens_out = 40_000;
        let b = a;
        assert_eq!(solved_per_million_tokens(&[a, b]), Some(10.0));
        let doubled: Vec<Outcome> = [a, b]
            .iter()
            .map(|x| Outcome {
                tokens_in: x.tokens_in * 2,
                tokens_out: x.tokens_out * 2,
                ..*x
            })
            .collect();
        assert_eq!(solved_per_million_tokens(&doubled), Some(5.0));
        let failed = Outcome { solved: false, ..a };
        assert_eq!(solved_per_million_tokens(&[failed]), Some(0.0));
        assert_eq!(solved_per_million_tokens(&[o(true, 3, 3)]), None);
    }

    #[test]
    fn cost() {
        let p = Pricing::new(1.0, 2.0).unwrap();
        assert_eq!(p.cost(1000, 500), 2.0);
        assert!(Pricing::new(-1.0, 0.0).is_err());
        let free = [o(true, 3, 3)];
        assert_eq!(cost_and_solved_per_usd(&free, &p).1, None);
        let paid = Outcome {
            tokens_in: 1000,
            tokens_out: 500,
            ..o(true, 3, 3)
        };
        let (costs, per_usd) = cost_and_solved_per_usd(&[paid, paid], &p);
        assert_eq!(costs, vec![2.0, 2.0]);
        assert_eq!(per_usd, Some(0.5));
        let scaled = Pricing::new(3.0, 6.0).unwrap();
        let (c3, u3) = cost_and_solved_per_usd(&[paid, paid], &scaled);
        assert_eq!(c3, vec![6.0, 6.0]);
        assert!((u3.unwrap() - 0.5 / 3.0).abs() < 1e-12);
    }
}
