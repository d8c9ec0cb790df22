use serde::Serialize;

use super::sigma::main_verdict;
use super::{Check, Setup};
use crate::analysis::{fit_tail_from, ks_two_sample, pearson, wilson, TailFamily, TailFit, TestResult, Z95};
use crate::error::{Error, Result};
use crate::essential::{sigma_from, DefectSample, SigmaOptions};
use crate::lattice::Site;

#[derive(Clone, Debug)]
pub struct DefectExperiment {
    pub x: Site,
    pub y: Site,
    pub margin: f64,
    /// Thresholds for `P(r ≥ t)`.
    pub grid: Vec<f64>,
    /// Start of the `exp(−B√t)` fit.
    pub t0: f64,
    pub level: f64,
}

#[derive(Clone, Debug)]
pub struct DefectReplica {
    pub replica: usize,
    pub seed: u64,
    pub survivor: bool,
    /// Uncensored samples only.
    pub sample: Option<DefectSample>,
    /// `σ(y)` of the main process, when uncensored.
    pub sigma_y: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TailVerdict {
    /// `(t, #{r ≥ t}, P̂, lo, hi)`.
    pub points: Vec<(f64, usize, f64, f64, f64)>,
    pub n: usize,
    pub exceedances: usize,
    pub fit: Option<TailFit>,
    /// Too few samples at or above `t0` to test the family.
    pub degenerate: bool,
}

#[derive(Clone, Debug)]
pub struct DefectOutcome {
    pub replicas: Vec<DefectReplica>,
    pub survivors: usize,
    pub tail: TailVerdict,
    pub ks: Option<TestResult>,
    pub correlation: Option<(f64, usize)>,
    pub checks: Vec<Check>,
}

/// `r(x,y)` over survivors, with the two observable consequences of the
/// shift: `σ(y)∘θ̃_x` has the law of `σ(y)` and is uncorrelated with `σ(x)`.
pub fn defect_experiment(s: &Setup, e: &DefectExperiment) -> Result<DefectOutcome> {
    if e.grid.is_empty() || e.grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("defect grid must be nonempty and increasing".into()));
    }
    let opts = SigmaOptions { survival_margin: e.margin };
    let origin = Site::origin(s.dim());
    let xy = &e.x + &e.y;
    let replicas = s.fan_out(|replica, seed| {
        let log = s.log(seed)?;
        let survivor = main_verdict(s, &log)?.alive_at(s.t_surv);
        if !survivor {
            return Ok(DefectReplica { replica, seed, survivor, sample: None, sigma_y: None });
        }
        let m = &s.model;
        let sx = sigma_from(m, &log, &origin, 0.0, &e.x, s.horizon, opts)?;
        let sxy = sigma_from(m, &log, &origin, 0.0, &xy, s.horizon, opts)?;
        let sy = sigma_from(m, &log, &origin, 0.0, &e.y, s.horizon, opts)?;
        let sigma_y = (!sy.censored && sy.k >= 1).then_some(sy.sigma);
        let sample = if sx.censored || sx.k == 0 || sxy.censored || sxy.k == 0 {
            None
        } else {
            let shifted = sigma_from(m, &log, &e.x, sx.sigma, &xy, s.horizon, opts)?;
            (!shifted.censored && shifted.k >= 1).then(|| {
                let shift = shifted.sigma - sx.sigma;
                DefectSample {
                    x: e.x.clone(),
                    y: e.y.clone(),
                    sigma_x: sx.sigma,
                    sigma_y_shift: shift,
                    sigma_xy: sxy.sigma,
                    r: sxy.sigma - sx.sigma - shift,
                    censored: false,
                }
            })
        };
        Ok(DefectReplica { replica, seed, survivor, sample, sigma_y })
    })?;
    let survivors = replicas.iter().filter(|r| r.survivor).count();
    let samples: Vec<&DefectSample> = replicas.iter().filter_map(|r| r.sample.as_ref()).collect();
    let rs: Vec<f64> = samples.iter().map(|d| d.r).collect();
    let mut checks = Vec::new();

    let n = rs.len();
    let points: Vec<(f64, usize, f64, f64, f64)> = e
        .grid
        .iter()
        .map(|&t| {
            let c = rs.iter().filter(|&&r| r >= t).count();
            let (lo, hi) = wilson(c, n, Z95);
            (t, c, c as f64 / n.max(1) as f64, lo, hi)
        })
        .collect();
    let exceedances = rs.iter().filter(|&&r| r >= e.t0).count();
    let fit = if exceedances >= 100 { Some(fit_tail_from(&rs, TailFamily::ExpSqrtT, e.t0, None)?) } else { None };
    let degenerate = fit.is_none();
    let shown: Vec<String> = points.iter().map(|p| format!("P(r>={})={:.5}", p.0, p.2)).collect();
    // strictly decreasing while the tail is populated, zero after
    let monotone = n > 0
        && points.windows(2).all(|w| w[1].1 <= w[0].1 && (w[1].1 < w[0].1 || w[1].1 == 0));
    checks.push(Check::new("defect tail monotone", monotone, format!("{n} samples; {}", shown.join(", "))));
    let (pass, detail) = match &fit {
        Some(f) => (
            f.accepted(e.level),
            format!(
                "{} samples >= {}: B = {:.4} ± {:.4}, GOF p = {:.4}",
                f.n_tail,
                e.t0,
                f.rate.unwrap_or(f64::NAN),
                f.rate_se.unwrap_or(f64::NAN),
                f.gof_p.unwrap_or(f64::NAN)
            ),
        ),
        None => {
            let (_, hi) = wilson(exceedances, n, Z95);
            (
                n > 0,
                format!(
                    "degenerate: {exceedances} of {n} samples have r >= {}; no data to reject the family (P(r >= {}) <= {hi:.2e} at 95%)",
                    e.t0, e.t0
                ),
            )
        }
    };
    checks.push(Check::new("defect tail exp(-B sqrt t)", pass, detail));

    let shifts: Vec<f64> = samples.iter().map(|d| d.sigma_y_shift).collect();
    let plain: Vec<f64> = replicas.iter().filter_map(|r| r.sigma_y).collect();
    let ks = ks_two_sample(&plain, &shifts).ok();
    checks.push(match ks {
        Some(t) => Check::new(
            "shifted sigma law",
            t.p_value > e.level,
            format!("KS D = {:.4}, p = {:.4} ({} vs {} samples)", t.statistic, t.p_value, plain.len(), shifts.len()),
        ),
        None => Check::new("shifted sigma law", false, "not enough samples"),
    });
    let sx: Vec<f64> = samples.iter().map(|d| d.sigma_x).collect();
    let correlation = pearson(&sx, &shifts).ok().map(|r| (r, sx.len()));
    checks.push(match correlation {
        Some((rho, m)) => {
            let bound = 3.0 / (m as f64).sqrt();
            Check::new(
                "shifted sigma independence",
                rho.abs() < bound,
                format!("rho = {rho:.4}, bound 3/sqrt(n) = {bound:.4}, n = {m}"),
            )
        }
        None => Check::new("shifted sigma independence", false, "correlation undefined"),
    });
    Ok(DefectOutcome {
        replicas,
        survivors,
        tail: TailVerdict { points, n, exceedances, fit, degenerate },
        ks,
        correlation,
        checks,
    })
}

impl DefectOutcome {
    pub fn samples_csv(&self, dim: usize) -> String {
        let mut s = DefectSample::csv_header(dim) + "\n";
        for r in &self.replicas {
            if let Some(d) = &r.sample {
                s.push_str(&d.csv_row(r.replica as u64));
                s.push('\n');
            }
        }
        s
    }
}
