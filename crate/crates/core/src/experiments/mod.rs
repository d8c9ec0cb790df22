//! Replica-level experiment pipelines shared by the command-line front end
//! and the acceptance suite. Each returns a report carrying its raw
//! per-replica data and a list of named checks.

mod badgrowth;
mod defect;
mod oracle;
mod shape;
mod sigma;
mod simulate;
mod tails;

pub use badgrowth::{bad_growth, estimate_constants, BadGrowthExperiment, BadGrowthOutcome, GrowthConstants};
pub use defect::{defect_experiment, DefectExperiment, DefectOutcome, DefectReplica, TailVerdict};
pub use oracle::{oracle, replay, OracleExperiment, ReplayOutcome};
pub use shape::{shape, ShapeExperiment, ShapeOutcome, ShapeReplica, SigmaSpeed};
pub use sigma::{sigma_experiment, SigmaExperiment, SigmaOutcome, SigmaReplica, SiteSummary};
pub use simulate::{simulate, ReplicaRun, SimulateOutcome};
pub use tails::{tails, TailsExperiment, TailsOutcome};

use serde::Serialize;

use crate::engine::EventLog;
use crate::error::{Error, Result};
use crate::lattice::Window;
use crate::models::ModelSpec;
use crate::replicas::run_replicas;

/// Model, window, horizon and replica plan common to every experiment.
#[derive(Clone, Debug)]
pub struct Setup {
    pub model: ModelSpec,
    pub window: Window,
    pub horizon: f64,
    /// Survival is judged by being alive at this time.
    pub t_surv: f64,
    pub replicas: usize,
    pub seed: u64,
    /// Worker threads; 0 lets rayon decide.
    pub workers: usize,
}

impl Setup {
    /// `t_surv` defaults to `0.8 × horizon`, 100 replicas, seed 1.
    pub fn new(model: ModelSpec, dim: usize, radius: u32, horizon: f64) -> Result<Self> {
        let s = Setup {
            model,
            window: Window::new(dim, radius)?,
            horizon,
            t_surv: 0.8 * horizon,
            replicas: 100,
            seed: 1,
            workers: 0,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::InvalidParameter(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(0.0..=self.horizon).contains(&self.t_surv) {
            return Err(Error::InvalidParameter(format!("t_surv = {} must lie in [0, horizon]", self.t_surv)));
        }
        if self.replicas == 0 {
            return Err(Error::InvalidParameter("replicas must be at least 1".into()));
        }
        Ok(())
    }

    pub fn with_replicas(mut self, n: usize) -> Self {
        self.replicas = n;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn log(&self, seed: u64) -> Result<EventLog> {
        EventLog::new(&self.model, &self.window, self.horizon, seed)
    }

    pub fn dim(&self) -> usize {
        self.window.dim()
    }

    /// `f(index, seed)` over all replicas, in index order.
    pub fn fan_out<T: Send>(&self, f: impl Fn(usize, u64) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
        self.validate()?;
        run_replicas(self.replicas, self.seed, self.workers, f)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), pass, detail: detail.into() }
    }
}

pub fn all_pass(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.pass)
}

/// `replica,x1..xd,...` prefix columns.
pub(crate) fn coord_header(prefix: &str, dim: usize) -> String {
    (1..=dim).map(|i| format!("{prefix}{i}")).collect::<Vec<_>>().join(",")
}
