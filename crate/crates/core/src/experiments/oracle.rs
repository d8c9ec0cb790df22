use std::path::Path;

use serde::Serialize;

use super::{Check, Setup};
use crate::analysis::{compare_with_engine, OracleComparison};
use crate::engine::{compare_dumps, dump_log, replay_check, ReplayReport};
use crate::error::{Error, Result};
use crate::lattice::Site;
use crate::models::{min_config, Configuration};

#[derive(Clone, Debug)]
pub struct OracleExperiment {
    pub steps: u32,
    /// Defaults to `δ_min` at the origin.
    pub init: Option<Configuration>,
    /// Pass when TV < `k` combined standard errors.
    pub k: f64,
}

impl Default for OracleExperiment {
    fn default() -> Self {
        OracleExperiment { steps: 2, init: None, k: 4.0 }
    }
}

/// Engine frequencies against the exact DOP law; replicas and seed come
/// from the setup.
pub fn oracle(s: &Setup, e: &OracleExperiment) -> Result<(OracleComparison, Vec<Check>)> {
    let init = match &e.init {
        Some(c) => c.clone(),
        None => min_config(&s.model, &Site::origin(s.dim()), &s.window)?,
    };
    let c = compare_with_engine(&s.model, &s.window, e.steps, &init, s.replicas, s.seed)?;
    let check = Check::new(
        "dop oracle",
        c.pass(e.k),
        format!("TV = {:.5}, {} x combined SE = {:.5}, max |z| = {:.2}", c.tv, e.k, e.k * c.tv_se, c.max_z),
    );
    Ok((c, vec![check]))
}

#[derive(Clone, Debug, Serialize)]
pub struct ReplayOutcome {
    pub report: ReplayReport,
    pub dump_bytes: usize,
    /// What `compare_dumps` said about a copy with one flipped byte.
    pub corrupted_diagnostic: Option<String>,
    pub checks: Vec<Check>,
}

/// Replay self-check on the setup's model and window with the master seed.
/// If `dump_to` is given the log is written there, then read back and
/// compared, and a corrupted copy is written next to it.
pub fn replay(s: &Setup, dump_to: Option<&Path>) -> Result<ReplayOutcome> {
    let report = replay_check(&s.model, &s.window, s.horizon, s.seed)?;
    let mut checks: Vec<Check> =
        report.checks.iter().map(|c| Check::new(c.name, c.pass, c.detail.clone())).collect();
    let bytes = dump_log(&s.log(s.seed)?);
    let stored = match dump_to {
        Some(p) => {
            std::fs::write(p, &bytes)?;
            std::fs::read(p)?
        }
        None => bytes.clone(),
    };
    let diff = compare_dumps(&bytes, &stored);
    checks.push(Check::new(
        "dump round trip",
        diff.is_none(),
        diff.unwrap_or_else(|| format!("{} bytes", bytes.len())),
    ));
    // negative test: one flipped byte near the end must be located
    let mut bad = stored.clone();
    let at = bad.len().checked_sub(2).ok_or_else(|| Error::Format("empty dump".into()))?;
    bad[at] ^= 0x5a;
    if let Some(p) = dump_to {
        std::fs::write(p.with_extension("corrupted.shlb"), &bad)?;
    }
    let corrupted = compare_dumps(&stored, &bad);
    checks.push(Check::new(
        "corrupted dump detected",
        corrupted.is_some(),
        corrupted.clone().unwrap_or_else(|| "corruption not detected".into()),
    ));
    Ok(ReplayOutcome { report, dump_bytes: bytes.len(), corrupted_diagnostic: corrupted, checks })
}
