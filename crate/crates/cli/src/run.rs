//! Subcommands: config → experiment → checks and output files.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::{json, Value};
use thiserror::Error;

use shapesim::experiments::{
    bad_growth, defect_experiment, oracle, replay, shape, sigma_experiment, simulate, tails, BadGrowthExperiment,
    Check, DefectExperiment, OracleExperiment, Setup, ShapeExperiment, SigmaExperiment, TailsExperiment,
};
use shapesim::lattice::{NormKind, Site};
use shapesim::models::ModelSpec;

use crate::config::{Config, ConfigError, Layer, Origin};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Core(#[from] shapesim::Error),
    #[error("cannot write {path}: {source}")]
    Write { path: String, source: std::io::Error },
}

impl CliError {
    /// 2 for anything the config can fix (including capacity), 3 when the
    /// data cannot support a verdict, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        use shapesim::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(E::InvalidParameter(_) | E::Capacity(_) | E::Parse(_) | E::OutsideWindow(_) | E::WindowMismatch(_)) => 2,
            CliError::Core(E::InsufficientData(_)) => 3,
            _ => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Sigma,
    Defect,
    Shape,
    Tails,
    BadGrowth,
    Oracle,
    ReplayCheck,
}

const BASE_DEFAULTS: &str = "\
model.name = cp
model.lambda = 2
lattice.dim = 1
lattice.radius = 50
run.horizon = 30
run.replicas = 100
run.seed = 1
";

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Sigma => "sigma",
            Command::Defect => "defect",
            Command::Shape => "shape",
            Command::Tails => "tails",
            Command::BadGrowth => "badgrowth",
            Command::Oracle => "oracle",
            Command::ReplayCheck => "replay-check",
        }
    }

    fn extra_defaults(self) -> &'static str {
        match self {
            Command::Simulate => "",
            Command::Sigma | Command::Defect => "lattice.radius = 80\nrun.horizon = 60\n",
            Command::Tails => "lattice.radius = 60\nrun.horizon = 60\nrun.replicas = 30000\ntails.k_site = none\n",
            Command::Shape => "\
model.lambda = 2
lattice.dim = 2
lattice.radius = 150
run.horizon = 30
run.replicas = 20
shape.grid_reach = 40
shape.eps = 0.3
",
            Command::BadGrowth => "lattice.radius = 80\nrun.horizon = 40\nrun.replicas = 200\n",
            Command::Oracle => "\
model.name = dop
model.p = 0.7
model.q = 0.3
model.alpha = 0.1
lattice.radius = 2
run.horizon = 2
run.replicas = 100000
",
            Command::ReplayCheck => "lattice.radius = 20\nrun.horizon = 10\n",
        }
    }

    /// Built-in defaults for this command, applied below everything else.
    pub fn defaults(self) -> Config {
        let mut c = Config::default();
        let parse = |t: &str| Layer::parse(t, |_| Origin::Default).expect("built-in defaults parse");
        c.apply(parse(BASE_DEFAULTS), "defaults");
        c.apply(parse(self.extra_defaults()), "defaults");
        c.sources.clear();
        c
    }
}

/// One output file, written under the output directory.
#[derive(Clone, Debug)]
pub struct OutFile {
    pub name: String,
    pub body: Vec<u8>,
    /// CSV and JSON-lines files get a provenance header; binary dumps
    /// carry their own.
    pub kind: FileKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FileKind {
    Csv,
    JsonLines,
    Binary,
}

impl OutFile {
    fn csv(name: impl Into<String>, body: String) -> Self {
        OutFile { name: name.into(), body: body.into_bytes(), kind: FileKind::Csv }
    }
}

pub struct RunReport {
    pub command: Command,
    pub checks: Vec<Check>,
    pub conjectural: bool,
    pub note: Option<String>,
    pub data: Value,
    pub files: Vec<OutFile>,
}

impl RunReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// 0 when all checks pass or the run is conjectural, 3 otherwise.
    pub fn exit_code(&self) -> u8 {
        if self.pass() || self.conjectural {
            0
        } else {
            3
        }
    }
}

pub fn model(c: &Config) -> Result<ModelSpec, CliError> {
    let name = c.model_name().unwrap_or_else(|| "cp".into());
    ModelSpec::from_params(&name, &c.model_params()).map_err(|e| {
        let at = c.entry("model.name").map_or("model".to_string(), |e| format!("{}", e.origin));
        CliError::Config(ConfigError::Invalid(format!("{at}: model `{name}`: {e}")))
    })
}

pub fn setup(c: &Config) -> Result<Setup, CliError> {
    let dim: usize = c.require("lattice.dim")?;
    let radius: u32 = c.require("lattice.radius")?;
    let horizon: f64 = c.require("run.horizon")?;
    let mut s = Setup::new(model(c)?, dim, radius, horizon).map_err(|e| match e {
        shapesim::Error::InvalidParameter(m) => CliError::Config(ConfigError::Invalid(m)),
        other => CliError::Core(other),
    })?;
    if let Some(t) = c.get::<f64>("run.t_surv")? {
        if !(0.0..=horizon).contains(&t) {
            return Err(c.field_error("run.t_surv", format!("must lie in [0, run.horizon = {horizon}]")).into());
        }
        s.t_surv = t;
    }
    s.replicas = c.require("run.replicas")?;
    if s.replicas == 0 {
        return Err(c.field_error("run.replicas", "must be at least 1").into());
    }
    s.seed = c.require("run.seed")?;
    s.workers = c.get_or("run.workers", 0)?;
    Ok(s)
}

fn level(c: &Config, key: &str) -> Result<f64, ConfigError> {
    let v: f64 = c.get_or(key, 0.01)?;
    if !(v > 0.0 && v < 1.0) {
        return Err(c.field_error(key, "must lie in (0, 1)"));
    }
    Ok(v)
}

fn positive(c: &Config, key: &str, default: f64) -> Result<f64, ConfigError> {
    let v: f64 = c.get_or(key, default)?;
    if !(v > 0.0 && v.is_finite()) {
        return Err(c.field_error(key, "must be positive"));
    }
    Ok(v)
}

pub fn sigma_params(c: &Config, dim: usize) -> Result<SigmaExperiment, ConfigError> {
    Ok(SigmaExperiment {
        sites: c.sites("sigma.sites", dim)?.unwrap_or_else(|| [5, 10, 20].map(|n| Site::axis(dim, 0, n)).to_vec()),
        margin: positive(c, "sigma.margin", 20.0)?,
        max_gap_ratio: c.get("sigma.max_gap_ratio")?,
        norm: c.get_or("sigma.norm", NormKind::L1)?,
    })
}

pub fn defect_params(c: &Config, dim: usize) -> Result<DefectExperiment, ConfigError> {
    let grid = c.floats("defect.grid")?.unwrap_or_else(|| vec![0.0, 0.5, 1.0, 2.0, 4.0, 8.0]);
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(c.field_error("defect.grid", "must be strictly increasing"));
    }
    Ok(DefectExperiment {
        x: c.site("defect.x", dim)?.unwrap_or_else(|| Site::axis(dim, 0, 10)),
        y: c.site("defect.y", dim)?.unwrap_or_else(|| Site::axis(dim, 0, 10)),
        margin: positive(c, "defect.margin", 20.0)?,
        grid,
        t0: c.get_or("defect.t0", 0.5)?,
        level: level(c, "defect.level")?,
    })
}

pub fn tails_params(c: &Config, dim: usize) -> Result<TailsExperiment, ConfigError> {
    let k_site = match c.raw("tails.k_site") {
        Some("none") => None,
        Some(_) => c.site("tails.k_site", dim)?,
        None => Some(Site::axis(dim, 0, 10)),
    };
    Ok(TailsExperiment {
        sc_t0: c.get_or("tails.sc_t0", 12.0)?,
        k_site,
        margin: positive(c, "tails.margin", 20.0)?,
        level: level(c, "tails.level")?,
    })
}

pub fn shape_params(c: &Config, s: &Setup) -> Result<ShapeExperiment, CliError> {
    let dim = s.dim();
    let directions = match c.sites("shape.directions", dim)? {
        Some(d) => d,
        None => shapesim::analysis::default_directions(dim)
            .map_err(|e| c.field_error("lattice.dim", e.to_string()))?,
    };
    if let Some(z) = directions.iter().find(|d| d.is_origin()) {
        return Err(c.field_error("shape.directions", format!("direction {z} is zero")).into());
    }
    let times = c.floats("shape.times")?.unwrap_or_else(|| vec![s.horizon]);
    if let Some(t) = times.iter().find(|&&t| !(t > 0.0 && t <= s.horizon)) {
        return Err(c.field_error("shape.times", format!("time {t} outside (0, run.horizon]")).into());
    }
    let eps = c.get_or("shape.eps", 0.25)?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(c.field_error("shape.eps", "must lie in (0, 1)").into());
    }
    let min_pass_rate = c.get_or("shape.min_pass_rate", 0.9)?;
    if !(0.0..=1.0).contains(&min_pass_rate) {
        return Err(c.field_error("shape.min_pass_rate", "must lie in [0, 1]").into());
    }
    Ok(ShapeExperiment {
        directions,
        grid_reach: positive(c, "shape.grid_reach", f64::from(s.window.radius()) / 2.0)?,
        grid_points: c.get_or("shape.grid_points", 5)?,
        times,
        eps,
        min_pass_rate,
        symmetry_k: positive(c, "shape.symmetry_k", 2.0)?,
        compare_sigma: c.get_or("shape.compare_sigma", false)?,
        sigma_margin: positive(c, "shape.sigma_margin", 20.0)?,
    })
}

pub fn badgrowth_params(c: &Config, dim: usize) -> Result<BadGrowthExperiment, ConfigError> {
    let t_grid = c.floats("badgrowth.t_grid")?.unwrap_or_else(|| vec![4.0, 8.0, 16.0]);
    if t_grid.len() < 2 || t_grid.iter().any(|&t| !(t > 0.0)) {
        return Err(c.field_error("badgrowth.t_grid", "needs at least two positive times"));
    }
    Ok(BadGrowthExperiment {
        x: c.site("badgrowth.x", dim)?.unwrap_or_else(|| Site::origin(dim)),
        t_grid,
        l: positive(c, "badgrowth.l", 20.0)?,
        m1: c.get("badgrowth.m1")?,
        m2: c.get("badgrowth.m2")?,
        kappa: c.get("badgrowth.kappa")?,
        norm: c.get_or("badgrowth.norm", NormKind::L1)?,
        stop_at_first: c.get_or("badgrowth.stop_at_first", true)?,
        pilot_replicas: c.get_or("badgrowth.pilot_replicas", 500)?,
        level: level(c, "badgrowth.level")?,
    })
}

pub fn oracle_params(c: &Config) -> Result<OracleExperiment, ConfigError> {
    Ok(OracleExperiment { steps: c.get_or("oracle.steps", 2)?, init: None, k: positive(c, "oracle.k", 4.0)? })
}

fn join_csv<T: std::fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Runs `cmd`. `out` is only needed by `replay-check`, which writes its
/// dump there directly.
pub fn execute(cmd: Command, c: &Config, out: Option<&Path>) -> Result<RunReport, CliError> {
    c.validate_keys()?;
    let s = setup(c)?;
    let dim = s.dim();
    let mut files = Vec::new();
    let (checks, data) = match cmd {
        Command::Simulate => {
            let o = simulate(&s)?;
            files.push(OutFile::csv("hits.csv", o.hits_csv()));
            files.push(OutFile { name: "verdicts.jsonl".into(), body: o.verdicts_jsonl().into_bytes(), kind: FileKind::JsonLines });
            (o.checks, json!({ "summary": o.summary }))
        }
        Command::Sigma => {
            let e = sigma_params(c, dim)?;
            let o = sigma_experiment(&s, &e)?;
            files.push(OutFile::csv("sigma.csv", o.records_csv(dim)));
            (o.checks, json!({ "survivors": o.survivors, "sites": o.summaries }))
        }
        Command::Defect => {
            let e = defect_params(c, dim)?;
            let o = defect_experiment(&s, &e)?;
            files.push(OutFile::csv("defect.csv", o.samples_csv(dim)));
            let mut tail = String::from("t,count,p,lo,hi\n");
            for p in &o.tail.points {
                let _ = writeln!(tail, "{:?},{},{:?},{:?},{:?}", p.0, p.1, p.2, p.3, p.4);
            }
            files.push(OutFile::csv("defect_tail.csv", tail));
            let ks = o.ks.map(|t| json!({ "statistic": t.statistic, "p_value": t.p_value }));
            (o.checks, json!({ "survivors": o.survivors, "tail": o.tail, "ks": ks, "correlation": o.correlation }))
        }
        Command::Tails => {
            let e = tails_params(c, dim)?;
            let o = tails(&s, &e)?;
            let mut tau = String::from("replica,seed,died,tau\n");
            for (i, seed, v) in &o.verdicts {
                let t = v.tau();
                let _ = writeln!(tau, "{i},{seed},{},{}", t.is_some(), t.map_or(String::new(), |t| format!("{t:?}")));
            }
            files.push(OutFile::csv("tau.csv", tau));
            let mut k = String::from("replica,k\n");
            for (i, v) in &o.ks {
                let _ = writeln!(k, "{i},{v}");
            }
            files.push(OutFile::csv("k.csv", k));
            (o.checks, json!({ "sc_fit": o.sc_fit, "k_tail": o.k_tail }))
        }
        Command::Shape => {
            let e = shape_params(c, &s)?;
            let o = shape(&s, &e)?;
            files.push(OutFile::csv("speeds.csv", o.shape.to_csv()));
            files.push(OutFile::csv("vertices.csv", o.vertices_csv()));
            files.push(OutFile::csv("inclusion.csv", o.inclusion_csv()));
            for snap in &o.snapshots {
                files.push(OutFile::csv(format!("snapshot_t{}.csv", snap.t), snap.to_csv()));
            }
            let rates: Vec<Value> =
                o.pass_rates.iter().map(|(t, p, n)| json!({ "t": t, "passed": p, "evaluated": n })).collect();
            (o.checks, json!({ "survivors": o.survivors, "shape": o.shape, "pass_rates": rates, "sigma": o.sigma }))
        }
        Command::BadGrowth => {
            let e = badgrowth_params(c, dim)?;
            let o = bad_growth(&s, &e)?;
            files.push(OutFile::csv("badgrowth.csv", o.counts_csv()));
            let d = &o.decay;
            let mut decay = String::from("t,k,n,p,lo,hi\n");
            for j in 0..d.t.len() {
                let _ = writeln!(decay, "{:?},{},{},{:?},{:?},{:?}", d.t[j], d.k[j], d.n[j], d.p[j], d.lo[j], d.hi[j]);
            }
            files.push(OutFile::csv("decay.csv", decay));
            (o.checks, json!({ "constants": o.constants, "decay": o.decay, "t_grid": join_csv(&e.t_grid) }))
        }
        Command::Oracle => {
            let e = oracle_params(c)?;
            let (cmp, checks) = oracle(&s, &e)?;
            files.push(OutFile::csv("oracle.csv", cmp.to_table()));
            (checks, json!({ "replicas": cmp.replicas, "tv": cmp.tv, "tv_se": cmp.tv_se, "max_z": cmp.max_z, "k": e.k }))
        }
        Command::ReplayCheck => {
            let dump = match (out, c.get_or("replay.dump", true)?) {
                (Some(dir), true) => Some(dir.join("log.shlb")),
                _ => None,
            };
            let o = replay(&s, dump.as_deref())?;
            (o.checks.clone(), serde_json::to_value(&o).unwrap_or(Value::Null))
        }
    };
    Ok(RunReport {
        command: cmd,
        checks,
        conjectural: c.get_or("preset.conjectural", false)?,
        note: c.raw("preset.note").map(String::from),
        data,
        files,
    })
}
