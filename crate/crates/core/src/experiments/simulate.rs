use std::fmt::Write as _;

use serde::Serialize;

use super::{Check, Setup};
use crate::analysis::{wilson, Z95};
use crate::engine::{run_with, RunOptions};
use crate::error::Result;
use crate::lattice::Site;
use crate::models::min_config;
use crate::observables::{extinction, hit_times, HitRecord, SurvivalVerdict};

#[derive(Clone, Debug)]
pub struct ReplicaRun {
    pub replica: usize,
    pub seed: u64,
    pub verdict: SurvivalVerdict,
    pub hits: HitRecord,
}

#[derive(Clone, Debug)]
pub struct SimulateOutcome {
    pub runs: Vec<ReplicaRun>,
    pub summary: SimulateSummary,
    pub checks: Vec<Check>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SimulateSummary {
    pub replicas: usize,
    pub died: usize,
    pub alive_at_t_surv: usize,
    pub survival: f64,
    pub survival_lo: f64,
    pub survival_hi: f64,
    pub truncated: usize,
}

/// One run from `δ_min` at the origin per replica, to the horizon or
/// extinction.
pub fn run_one(s: &Setup, replica: usize, seed: u64) -> Result<ReplicaRun> {
    let log = s.log(seed)?;
    let init = min_config(&s.model, &Site::origin(s.dim()), &s.window)?;
    let opts = RunOptions { stop_at_extinction: true, record_jumps: false };
    let tr = run_with(&s.model, &log, &init, 0.0, s.horizon, opts)?;
    Ok(ReplicaRun { replica, seed, verdict: extinction(&tr), hits: hit_times(&tr) })
}

pub fn simulate(s: &Setup) -> Result<SimulateOutcome> {
    let runs = s.fan_out(|i, seed| run_one(s, i, seed))?;
    let died = runs.iter().filter(|r| r.verdict.died()).count();
    let alive = runs.iter().filter(|r| r.verdict.alive_at(s.t_surv)).count();
    let (lo, hi) = wilson(alive, runs.len(), Z95);
    let summary = SimulateSummary {
        replicas: runs.len(),
        died,
        alive_at_t_surv: alive,
        survival: alive as f64 / runs.len() as f64,
        survival_lo: lo,
        survival_hi: hi,
        truncated: runs.iter().filter(|r| r.hits.truncated()).count(),
    };
    // observable consistency: the origin is hit at 0, no hit after the end,
    // and a dead process reports no hit after τ
    let bad = runs
        .iter()
        .filter(|r| {
            let origin = r.hits.get(&Site::origin(s.dim()));
            let last = r.hits.entries().map(|(_, h)| h).fold(0.0, f64::max);
            origin != Some(0.0) || last > s.horizon || r.verdict.tau().is_some_and(|tau| last > tau)
        })
        .count();
    let checks = vec![Check::new(
        "observable consistency",
        bad == 0,
        format!("{bad} of {} replicas inconsistent", runs.len()),
    )];
    Ok(SimulateOutcome { runs, summary, checks })
}

impl SimulateOutcome {
    /// `replica,x1..xd,t_hit` for every hit site.
    pub fn hits_csv(&self) -> String {
        let dim = self.runs.first().map_or(1, |r| r.hits.window().dim());
        let mut s = format!("replica,{},t_hit\n", super::coord_header("x", dim));
        for r in &self.runs {
            let w = r.hits.window();
            let mut c = vec![0; dim];
            for (i, h) in r.hits.entries() {
                w.coords_into(i, &mut c);
                let _ = write!(s, "{}", r.replica);
                for v in &c {
                    let _ = write!(s, ",{v}");
                }
                let _ = writeln!(s, ",{h:?}");
            }
        }
        s
    }

    /// One JSON object per line.
    pub fn verdicts_jsonl(&self) -> String {
        self.runs.iter().map(|r| r.verdict.to_json(r.replica as u64, r.seed).to_string() + "\n").collect()
    }
}
