use serde::Serialize;

use super::simulate::run_one;
use super::{Check, Setup};
use crate::analysis::{
    check_inclusion, estimate_speed, hit_samples, mean_se, ols, shape_snapshot, InclusionReport, ShapeEstimate,
    Snapshot, SpeedEstimate,
};
use crate::error::{Error, Result};
use crate::essential::{sigma_from, SigmaOptions};
use crate::lattice::{NormKind, Site};
use crate::observables::HitRecord;

#[derive(Clone, Debug)]
pub struct ShapeExperiment {
    pub directions: Vec<Site>,
    /// Sup-norm of the farthest grid point `n·x` used for `μ̂(x)`.
    pub grid_reach: f64,
    pub grid_points: usize,
    /// Inclusion is checked at each of these times.
    pub times: Vec<f64>,
    pub eps: f64,
    pub min_pass_rate: f64,
    /// Symmetry tolerance in joint standard errors.
    pub symmetry_k: f64,
    /// Also estimate the speed along the first direction from `σ(n·x)`.
    pub compare_sigma: bool,
    pub sigma_margin: f64,
}

#[derive(Clone, Debug)]
pub struct ShapeReplica {
    pub replica: usize,
    pub seed: u64,
    pub survivor: bool,
    pub hits: HitRecord,
    /// `σ(n·x)` along the first direction, when requested and uncensored.
    pub sigma: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SigmaSpeed {
    pub direction: Site,
    pub from_hits: SpeedEstimate,
    pub from_sigma: SpeedEstimate,
    /// `|μ̂_t − μ̂_σ|` and `sqrt(se_t² + se_σ²)`.
    pub difference: f64,
    pub joint_se: f64,
    /// Mean and standard error of the per-replica slope difference.
    pub paired: (f64, f64),
}

#[derive(Clone, Debug)]
pub struct ShapeOutcome {
    pub replicas: Vec<ShapeReplica>,
    pub survivors: usize,
    pub shape: ShapeEstimate,
    /// Inclusion reports of survivors, per time.
    pub inclusion: Vec<Vec<(usize, InclusionReport)>>,
    /// `(t, passed, evaluated)`.
    pub pass_rates: Vec<(f64, usize, usize)>,
    pub sigma: Option<SigmaSpeed>,
    /// First survivor's snapshot at each time.
    pub snapshots: Vec<Snapshot>,
    pub checks: Vec<Check>,
}

/// Grid `n` along `dir` reaching sup-norm `reach`.
pub fn direction_grid(dir: &Site, reach: f64, points: usize) -> Result<Vec<i32>> {
    let step = dir.norm(NormKind::Linf);
    let n_max = (reach / step).floor() as i32;
    let mut g: Vec<i32> =
        (1..=points).map(|k| ((k as f64 * n_max as f64 / points as f64).round() as i32).max(1)).collect();
    g.dedup();
    if g.len() < 3 {
        return Err(Error::InvalidParameter(format!("grid reach {reach} gives fewer than 3 points along {dir}")));
    }
    Ok(g)
}

pub fn shape(s: &Setup, e: &ShapeExperiment) -> Result<ShapeOutcome> {
    if e.directions.is_empty() {
        return Err(Error::InvalidParameter("shape needs directions".into()));
    }
    if let Some(&t) = e.times.iter().find(|&&t| !(t > 0.0) || t > s.horizon) {
        return Err(Error::InvalidParameter(format!("inclusion time {t} outside (0, horizon]")));
    }
    let grids: Vec<Vec<i32>> =
        e.directions.iter().map(|d| direction_grid(d, e.grid_reach, e.grid_points)).collect::<Result<_>>()?;
    let origin = Site::origin(s.dim());
    let opts = SigmaOptions { survival_margin: e.sigma_margin };
    let replicas = s.fan_out(|i, seed| {
        let run = run_one(s, i, seed)?;
        let survivor = run.verdict.alive_at(s.t_surv);
        let sigma = if e.compare_sigma && survivor {
            let log = s.log(seed)?;
            let mut out = Vec::new();
            for &n in &grids[0] {
                let rec = sigma_from(&s.model, &log, &origin, 0.0, &e.directions[0].scale(n), s.horizon, opts)?;
                if rec.censored || rec.k == 0 {
                    break;
                }
                out.push(rec.sigma);
            }
            (out.len() == grids[0].len()).then_some(out)
        } else {
            None
        };
        Ok(ShapeReplica { replica: i, seed, survivor, hits: run.hits, sigma })
    })?;
    let surv: Vec<&ShapeReplica> = replicas.iter().filter(|r| r.survivor).collect();
    let records: Vec<&HitRecord> = surv.iter().map(|r| &r.hits).collect();
    let speeds: Vec<SpeedEstimate> = e
        .directions
        .iter()
        .zip(&grids)
        .map(|(d, g)| {
            let gf: Vec<f64> = g.iter().map(|&n| n as f64).collect();
            estimate_speed(d, &gf, &hit_samples(&records, d, g))
        })
        .collect::<Result<_>>()?;
    let shape = ShapeEstimate::new(speeds)?;

    let mut checks = Vec::new();
    let asym: Vec<String> = shape
        .asymmetries()
        .iter()
        .map(|(d, diff, se)| format!("{d}: {:.2} se", diff / se))
        .collect();
    checks.push(Check::new(
        "symmetric speed profile",
        shape.symmetric_within(e.symmetry_k) && !shape.asymmetries().is_empty(),
        format!("|mu(x) - mu(-x)| within {} joint se: {}", e.symmetry_k, asym.join(", ")),
    ));

    let mut inclusion = Vec::new();
    let mut pass_rates = Vec::new();
    let mut snapshots = Vec::new();
    for &t in &e.times {
        let mut reports = Vec::new();
        for r in &surv {
            let snap = shape_snapshot(&r.hits, t)?;
            reports.push((r.replica, check_inclusion(&shape, &snap, e.eps)?));
            if snapshots.len() < inclusion.len() + 1 {
                snapshots.push(snap);
            }
        }
        let passed = reports.iter().filter(|r| r.1.pass()).count();
        let truncated = reports.iter().filter(|r| r.1.truncated).count();
        let rate = passed as f64 / reports.len().max(1) as f64;
        checks.push(Check::new(
            format!("inclusion eps={} at t={t}", e.eps),
            !reports.is_empty() && rate >= e.min_pass_rate,
            format!("{passed}/{} survivors pass ({:.1}%, need {:.1}%); {truncated} truncated", reports.len(), 100.0 * rate, 100.0 * e.min_pass_rate),
        ));
        pass_rates.push((t, passed, reports.len()));
        inclusion.push(reports);
    }

    let sigma = if e.compare_sigma {
        let d = &e.directions[0];
        let gf: Vec<f64> = grids[0].iter().map(|&n| n as f64).collect();
        let with: Vec<&ShapeReplica> = surv.iter().copied().filter(|r| r.sigma.is_some()).collect();
        let sig: Vec<Vec<f64>> = with.iter().map(|r| r.sigma.clone().unwrap_or_default()).collect();
        // both slopes on the replicas whose σ resolved: censoring favours
        // fast replicas, so comparing against all survivors would be biased
        let hits_same = hit_samples(&with.iter().map(|r| &r.hits).collect::<Vec<_>>(), d, &grids[0]);
        let from_sigma = estimate_speed(d, &gf, &sig)?;
        let from_hits = estimate_speed(d, &gf, &hits_same)?;
        let diffs: Vec<f64> = sig
            .iter()
            .zip(&hits_same)
            .map(|(a, b)| Ok(ols(&gf, a)?.slope - ols(&gf, b)?.slope))
            .collect::<Result<_>>()?;
        let difference = (from_hits.mu - from_sigma.mu).abs();
        let joint_se = (from_hits.se.powi(2) + from_sigma.se.powi(2)).sqrt();
        checks.push(Check::new(
            format!("t and sigma slopes agree along {d}"),
            difference <= 2.0 * joint_se,
            format!(
                "mu_t = {:.4} ± {:.4}, mu_sigma = {:.4} ± {:.4} ({} replicas); |diff| = {difference:.4}, 2 joint se = {:.4}",
                from_hits.mu,
                from_hits.se,
                from_sigma.mu,
                from_sigma.se,
                from_sigma.replicas,
                2.0 * joint_se
            ),
        ));
        Some(SigmaSpeed { direction: d.clone(), from_hits, from_sigma, difference, joint_se, paired: mean_se(&diffs) })
    } else {
        None
    };
    let survivors = surv.len();
    Ok(ShapeOutcome { replicas, survivors, shape, inclusion, pass_rates, sigma, snapshots, checks })
}

impl ShapeOutcome {
    pub fn vertices_csv(&self) -> String {
        let mut s = format!("{}\n", super::coord_header("x", self.shape.dim));
        for v in &self.shape.vertices {
            let row: Vec<String> = v.iter().map(|c| format!("{c:?}")).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }

    /// `t,replica,pass,outer,inner,truncated`.
    pub fn inclusion_csv(&self) -> String {
        let mut s = String::from("t,replica,pass,outer_violations,inner_violations,truncated\n");
        for reports in &self.inclusion {
            for (i, r) in reports {
                s.push_str(&format!(
                    "{:?},{i},{},{},{},{}\n",
                    r.t,
                    r.pass(),
                    r.outer_violations.len(),
                    r.inner_violations.len(),
                    r.truncated
                ));
            }
        }
        s
    }
}
