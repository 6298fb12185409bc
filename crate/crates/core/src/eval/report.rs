//! Results table: one row per (agent, mode).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::puzzle::Difficulty;

use super::metrics::{self, Outcome, Pricing};
use super::select::{best_of_k, BestOfK, Sample, VerifiedSelector};
use super::store::LoadedRun;
use super::{EvalMode, TrajectoryRecord};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub agent_id: String,
    pub mode: EvalMode,
    pub tasks: usize,
    pub samples_per_task: usize,
    pub pass_at_1: f64,
    pub succ_task: usize,
    pub stacking: f64,
    pub easy: Option<f64>,
    pub mid: Option<f64>,
    pub hard: Option<f64>,
    pub avg_steps: Option<f64>,
    pub dist2opt: Option<f64>,
    pub norm_dist: Option<f64>,
    pub solved_per_mtok: Option<f64>,
    pub solved_per_usd: Option<f64>,
    /// Interactive minus one-shot Pass@1 for the same agent, on one-shot rows.
    pub delta: Option<f64>,
    pub best_of: Vec<BestOfK>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
}

fn tier_rate(firsts: &[&TrajectoryRecord], tier: Difficulty) -> Option<f64> {
    let outs: Vec<Outcome> = firsts
        .iter()
        .filter(|r| r.difficulty == tier)
        .map(|r| r.outcome())
        .collect();
    metrics::pass_at_1(&outs).ok()
}

pub fn build_report(runs: &[LoadedRun]) -> Report {
    // (agent, mode) -> (instance, run_index) -> record; later runs win.
    type Cells = BTreeMap<(String, u32), TrajectoryRecord>;
    let mut groups: BTreeMap<(String, EvalMode), Cells> = BTreeMap::new();
    let mut pricing: BTreeMap<String, Pricing> = BTreeMap::new();
    for run in runs {
        for r in &run.records {
            if let Some(p) = run.meta.as_ref().and_then(|m| m.agent.pricing) {
                pricing.insert(r.agent_id.clone(), p);
            }
            groups
                .entry((r.agent_id.clone(), r.mode))
                .or_default()
                .insert((r.instance_id.clone(), r.run_index), r.clone());
        }
    }
    let mut rows = Vec::new();
    for ((agent_id, mode), cells) in &groups {
        let mut by_task: BTreeMap<&str, Vec<&TrajectoryRecord>> = BTreeMap::new();
        for ((inst, _), r) in cells {
            by_task.entry(inst).or_default().push(r);
        }
        let firsts: Vec<&TrajectoryRecord> = by_task
            .values()
            .filter_map(|v| v.iter().find(|r| r.run_index == 0).copied())
            .collect();
        let outs: Vec<Outcome> = firsts.iter().map(|r| r.outcome()).collect();
        let Ok(pass) = metrics::pass_at_1(&outs) else {
            continue;
        };
        let samples: Vec<Vec<Sample>> = by_task
            .values()
            .map(|v| {
                let mut v = v.clone();
                v.sort_by_key(|r| r.run_index);
                v.iter().map(|r| r.sample()).collect()
            })
            .collect();
        let max_k = samples.iter().map(Vec::len).max().unwrap_or(1);
        let best_of = if max_k > 1 {
            [1, 2, 4, max_k]
                .into_iter()
                .filter(|&k| k <= max_k)
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .filter_map(|k| best_of_k(&samples, k, &VerifiedSelector))
                .collect()
        } else {
            Vec::new()
        };
        let usd = pricing
            .get(agent_id)
            .and_then(|p| metrics::cost_and_solved_per_usd(&outs, p).1);
        rows.push(ReportRow {
            agent_id: agent_id.clone(),
            mode: *mode,
            tasks: outs.len(),
            samples_per_task: max_k,
            pass_at_1: pass,
            succ_task: metrics::solved_count(&outs),
            stacking: pass,
            easy: tier_rate(&firsts, Difficulty::Easy),
            mid: tier_rate(&firsts, Difficulty::Mid),
            hard: tier_rate(&firsts, Difficulty::Hard),
            avg_steps: metrics::avg_steps_solved(&outs),
            dist2opt: metrics::dist2opt(&outs),
            norm_dist: metrics::norm_dist(&outs),
            solved_per_mtok: metrics::solved_per_million_tokens(&outs),
            solved_per_usd: usd,
            delta: None,
            best_of,
        });
    }
    let interactive: BTreeMap<String, f64> = rows
        .iter()
        .filter(|r| r.mode == EvalMode::Interactive)
        .map(|r| (r.agent_id.clone(), r.pass_at_1))
        .collect();
    for r in rows.iter_mut().filter(|r| r.mode == EvalMode::OneShot) {
        r.delta = interactive.get(&r.agent_id).map(|i| i - r.pass_at_1);
    }
    Report { rows }
}

fn pct(v: f64) -> String {
    format!("{:.1}", v * 100.0)
}

fn opt(v: Option<f64>, f: impl Fn(f64) -> String) -> String {
    v.map_or_else(|| "n/a".to_string(), f)
}

fn fixed2(v: f64) -> String {
    format!("{v:.2}")
}

const HEADER: [&str; 15] = [
    "Agent",
    "Mode",
    "N",
    "Pass@1",
    "Succ.Task",
    "Stacking",
    "Easy",
    "Mid",
    "Hard",
    "AvgSteps",
    "Dist2Opt",
    "N.Dist",
    "Solved/Tokens",
    "Solved/USD",
    "Delta",
];

impl Report {
    pub fn has_delta(&self) -> bool {
        self.rows.iter().any(|r| r.delta.is_some())
    }

    fn columns(&self) -> usize {
        if self.has_delta() {
            HEADER.len()
        } else {
            HEADER.len() - 1
        }
    }

    fn cells(&self, r: &ReportRow) -> Vec<String> {
        let mut v = vec![
            r.agent_id.clone(),
            r.mode.to_string(),
            r.tasks.to_string(),
            pct(r.pass_at_1),
            r.succ_task.to_string(),
            pct(r.stacking),
            opt(r.easy, pct),
            opt(r.mid, pct),
            opt(r.hard, pct),
            opt(r.avg_steps, fixed2),
            opt(r.dist2opt, fixed2),
            opt(r.norm_dist, fixed2),
            opt(r.solved_per_mtok, fixed2),
            opt(r.solved_per_usd, fixed2),
        ];
        if self.has_delta() {
            v.push(opt(r.delta, pct));
        }
        v
    }

    pub fn to_csv(&self) -> String {
        let mut out = HEADER[..self.columns()].join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&self.cells(r).join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_text(&self) -> String {
        let header: Vec<String> = HEADER[..self.columns()].iter().map(|s| s.to_string()).collect();
        let body: Vec<Vec<String>> = self.rows.iter().map(|r| self.cells(r)).collect();
        let widths: Vec<usize> = (0..header.len())
            .map(|c| {
                std::iter::once(&header)
                    .chain(&body)
                    .map(|row| row[c].len())
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |row: &[String]| -> String {
            row.iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (cell, w))| {
                    if i < 2 {
                        format!("{cell:<w$}")
                    } else {
                        format!("{cell:>w$}")
                    }
                })
                .collect::<Vec<_>>()
                .join("  ")
        };
        let mut out = String::new();
        let _ = writeln!(out, "{}", line(&header));
        for row in &body {
            let _ = writeln!(out, "{}", line(row));
        }
        for r in self.rows.iter().filter(|r| !r.best_of.is_empty()) {
            let _ = writeln!(out, "\n{} ({}) multi-sample:", r.agent_id, r.mode);
            for b in &r.best_of {
                let _ = writeln!(
                    out,
                    "  k={}: pass@k {}  avg@k {}  verified pick {}  (tasks {}, excluded {})",
                    b.k,
                    pct(b.pass_at_k),
                    pct(b.avg_at_k),
                    pct(b.selected),
                    b.tasks,
                    b.excluded
                );
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Status;
    use crate::voxel::BoxDims;

    fn rec(instance: &str, mode: EvalMode, run_index: u32, solved: bool, steps: u32) -> TrajectoryRecord {
        TrajectoryRecord {
            schema_version: 1,
            instance_id: instance.into(),
            episode_id: "e".into(),
            mode,
            agent_id: "a".into(),
            run_index,
            difficulty: Difficulty::Easy,
            box_dims: BoxDims::new(2, 2, 3).unwrap(),
            budget: 30,
            minimal_steps: 3,
            steps,
            solved,
            final_status: if solved { Status::Solved } else { Status::Failed },
            final_grid: String::new(),
            actions: vec![],
            tokens_in: 0,
            tokens_out: 0,
            wall_time_s: 0.0,
            parse_failures: 0,
        }
    }

    fn run(records: Vec<TrajectoryRecord>) -> LoadedRun {
        LoadedRun {
            dir: ".".into(),
            meta: None,
            records,
        }
    }

    #[test]
    fn delta_column() {
        let r = build_report(&[
            run(vec![
                rec("p", EvalMode::Interactive, 0, true, 3),
                rec("q", EvalMode::Interactive, 0, true, 5),
            ]),
            run(vec![
                rec("p", EvalMode::OneShot, 0, true, 3),
                rec("q", EvalMode::OneShot, 0, false, 0),
            ]),
        ]);
        assert_eq!(r.rows.len(), 2);
        let one = r.rows.iter().find(|x| x.mode == EvalMode::OneShot).unwrap();
        assert_eq!(one.delta, Some(0.5));
        let inter = r.rows.iter().find(|x| x.mode == EvalMode::Interactive).unwrap();
        assert_eq!(inter.dist2opt, Some(1.0));
        assert!(r.to_csv().lines().next().unwrap().ends_with("Delta"));
    }

    #[test]
    fn no_delta_without_one_shot() {
        let r = build_report(&[run(vec![rec("p", EvalMode::Interactive, 0, true, 3)])]);
        assert!(!r.has_delta());
        let csv = r.to_csv();
        assert!(!csv.contains("Delta"));
        assert!(csv.contains("a,interactive,1,100.0,1,100.0,100.0,n/a,n/a,3.00,0.00,0.00,n/a,n/a"));
    }
}
