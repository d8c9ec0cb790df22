//! Tail fits for (SC), (AML), (ALL), the defect and the `K` count.

use serde::Serialize;

use super::stats::{chi2_sf, chi_square_gof, wilson, wls, Z95};
use crate::error::{Error, Result};
use crate::lattice::NormKind;
use crate::observables::HitRecord;


#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TailFamily {
    /// `P(X ≥ t) ∝ exp(−b t)`.
    ExpT,
    /// `P(X ≥ t) ∝ exp(−b √t)`.
    ExpSqrtT,
}

impl TailFamily {
    pub fn g(self, t: f64) -> f64 {
        match self {
            TailFamily::ExpT => t,
            TailFamily::ExpSqrtT => t.max(0.0).sqrt(),
        }
    }

    fn g_inv(self, u: f64) -> f64 {
        match self {
            TailFamily::ExpT => u,
            TailFamily::ExpSqrtT => u * u,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TailPoint {
    pub threshold: f64,
    pub count: usize,
    /// Empirical `P(X ≥ threshold)` over all samples.
    pub survival: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailFit {
    pub family: TailFamily,
    /// Fits use `P(X ≥ t | X ≥ t0)`.
    pub t0: f64,
    pub n_total: usize,
    pub n_tail: usize,
    pub points: Vec<TailPoint>,
    /// Maximum-likelihood decay rate `b`.
    pub rate: Option<f64>,
    pub rate_se: Option<f64>,
    /// Slope of the weighted regression of `log S` on `g(t)` over the grid.
    pub rate_regression: Option<f64>,
    /// Pearson χ² p-value over equiprobable cells of the fitted law.
    pub gof_p: Option<f64>,
    pub degenerate: bool,
}

impl TailFit {
    pub fn monotone(&self) -> bool {
        self.points.windows(2).all(|w| w[1].survival <= w[0].survival)
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.points.windows(2).all(|w| w[1].survival < w[0].survival)
    }

    /// Positive rate and fit not rejected at `level`.
    pub fn accepted(&self, level: f64) -> bool {
        !self.degenerate && self.rate.is_some_and(|r| r > 0.0) && self.gof_p.is_some_and(|p| p > level)
    }
}

/// Fits the family from the smallest sample (clamped at 0 for `√t`).
pub fn fit_tail(samples: &[f64], family: TailFamily) -> Result<TailFit> {
    let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let t0 = if family == TailFamily::ExpSqrtT { min.max(0.0) } else { min };
    fit_tail_from(samples, family, t0, None)
}

/// Fits `P(X ≥ t | X ≥ t0) = exp(−b (g(t) − g(t0)))`. The default grid has
/// ten thresholds evenly spaced in `g` from `t0` to the 99% quantile.
pub fn fit_tail_from(samples: &[f64], family: TailFamily, t0: f64, grid: Option<&[f64]>) -> Result<TailFit> {
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("tail samples must be finite".into()));
    }
    let n_total = samples.len();
    let mut tail: Vec<f64> = samples.iter().copied().filter(|&x| x >= t0).collect();
    tail.sort_by(f64::total_cmp);
    let n_tail = tail.len();
    if n_tail < 100 {
        return Err(Error::InsufficientData(format!("{n_tail} samples at or above {t0}; need 100")));
    }
    let g0 = family.g(t0);
    let excess: Vec<f64> = tail.iter().map(|&x| family.g(x) - g0).collect();
    let sum: f64 = excess.iter().sum();
    let degenerate = tail[0] == tail[n_tail - 1] || sum <= 0.0;

    let grid: Vec<f64> = match grid {
        Some(g) => g.to_vec(),
        None => {
            let top = excess[((n_tail as f64 * 0.99) as usize).min(n_tail - 1)];
            (0..10).map(|i| family.g_inv(g0 + top * i as f64 / 10.0)).collect()
        }
    };
    let points: Vec<TailPoint> = grid
        .iter()
        .map(|&thr| {
            let count = samples.iter().filter(|&&x| x >= thr).count();
            let (lo, hi) = wilson(count, n_total, Z95);
            TailPoint { threshold: thr, count, survival: count as f64 / n_total as f64, lo, hi }
        })
        .collect();
    let mut fit = TailFit {
        family,
        t0,
        n_total,
        n_tail,
        points,
        rate: None,
        rate_se: None,
        rate_regression: None,
        gof_p: None,
        degenerate,
    };
    if degenerate {
        return Ok(fit);
    }
    let b = n_tail as f64 / sum;
    fit.rate = Some(b);
    fit.rate_se = Some(b / (n_tail as f64).sqrt());

    let (xs, ys, ws): (Vec<f64>, Vec<f64>, Vec<f64>) = {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut ws = Vec::new();
        for p in fit.points.iter().filter(|p| p.count >= 5 && p.count < n_total) {
            xs.push(family.g(p.threshold));
            ys.push(p.survival.ln());
            ws.push(p.count as f64 / (1.0 - p.survival));
        }
        (xs, ys, ws)
    };
    if xs.len() >= 2 {
        fit.rate_regression = wls(&xs, &ys, &ws).ok().map(|f| -f.slope);
    }

    let k = (n_tail / 20).clamp(4, 20);
    let edges: Vec<f64> = (1..k).map(|j| -(1.0 - j as f64 / k as f64).ln() / b).collect();
    let mut observed = vec![0.0; k];
    for &e in &excess {
        let cell = edges.partition_point(|&edge| edge <= e);
        observed[cell] += 1.0;
    }
    let expected = vec![n_tail as f64 / k as f64; k];
    fit.gof_p = chi_square_gof(&observed, &expected, 1, 5.0).ok().map(|t| t.p_value);
    Ok(fit)
}

/// `p(t) ≈ A exp(−B t)` fitted to binomial counts.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbabilityDecay {
    pub t: Vec<f64>,
    pub k: Vec<usize>,
    pub n: Vec<usize>,
    pub p: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub rate: Option<f64>,
    pub rate_se: Option<f64>,
    pub amplitude: Option<f64>,
    pub gof_p: Option<f64>,
}

impl ProbabilityDecay {
    pub fn strictly_decreasing(&self) -> bool {
        self.p.windows(2).all(|w| w[1] < w[0])
    }

    /// Positive rate, and the fit is not rejected at `level` (a fit with no
    /// residual degrees of freedom is not rejectable).
    pub fn accepted(&self, level: f64) -> bool {
        self.rate.is_some_and(|r| r > 0.0) && self.gof_p.is_none_or(|p| p > level)
    }
}

pub fn fit_probability_decay(t: &[f64], k: &[usize], n: &[usize]) -> Result<ProbabilityDecay> {
    if t.len() != k.len() || t.len() != n.len() {
        return Err(Error::InvalidParameter("grid and count lengths differ".into()));
    }
    let p: Vec<f64> = k.iter().zip(n).map(|(&k, &n)| if n == 0 { f64::NAN } else { k as f64 / n as f64 }).collect();
    let (lo, hi): (Vec<f64>, Vec<f64>) = k.iter().zip(n).map(|(&k, &n)| wilson(k, n, Z95)).unzip();
    let mut out = ProbabilityDecay {
        t: t.to_vec(),
        k: k.to_vec(),
        n: n.to_vec(),
        p: p.clone(),
        lo,
        hi,
        rate: None,
        rate_se: None,
        amplitude: None,
        gof_p: None,
    };
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ws = Vec::new();
    for i in 0..t.len() {
        if k[i] > 0 && k[i] < n[i] {
            xs.push(t[i]);
            ys.push(p[i].ln());
            ws.push(k[i] as f64 / (1.0 - p[i]));
        }
    }
    if xs.len() < 2 {
        return Ok(out);
    }
    let f = wls(&xs, &ys, &ws)?;
    out.rate = Some(-f.slope);
    out.rate_se = Some(f.slope_se);
    out.amplitude = Some(f.intercept.exp());
    if t.len() > 2 {
        let stat: f64 = (0..t.len())
            .filter(|&i| n[i] > 0)
            .map(|i| {
                let q = (f.intercept + f.slope * t[i]).exp().min(1.0 - 1e-12);
                let e = n[i] as f64 * q;
                (k[i] as f64 - e).powi(2) / (e * (1.0 - q)).max(1e-300)
            })
            .sum();
        out.gof_p = Some(chi2_sf(stat, t.len() - 2));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrowthCheck {
    /// `M1` for (AML), `M2` for (ALL).
    pub constant: f64,
    pub decay: ProbabilityDecay,
    /// Nonincreasing within Wilson overlap and the last probability's upper
    /// bound below 10%.
    pub clean: bool,
}

fn clean(d: &ProbabilityDecay) -> bool {
    let nonincreasing = d.lo.windows(2).zip(d.hi.windows(2)).all(|(lo, hi)| lo[1] <= hi[0]);
    nonincreasing && d.hi.last().is_some_and(|&h| h < 0.1)
}

/// (AML): for each `M1`, the fraction of runs in which some `x` with
/// `‖x‖ ≥ M1 t` is hit by time `t`.
pub fn check_aml(records: &[HitRecord], m1_grid: &[f64], t_grid: &[f64], norm: NormKind) -> Result<Vec<GrowthCheck>> {
    if records.is_empty() {
        return Err(Error::InsufficientData("no hit records".into()));
    }
    // reach[r][j] = max ‖x‖ over sites hit by t_grid[j]
    let reach: Vec<Vec<f64>> = records
        .iter()
        .map(|rec| {
            let w = rec.window();
            let mut c = vec![0i32; w.dim()];
            let mut pts: Vec<(f64, f64)> = rec
                .entries()
                .map(|(i, h)| {
                    w.coords_into(i, &mut c);
                    let v: Vec<f64> = c.iter().map(|&a| a as f64).collect();
                    (h, norm.of(&v))
                })
                .collect();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            t_grid
                .iter()
                .map(|&t| pts.iter().take_while(|p| p.0 <= t).map(|p| p.1).fold(0.0, f64::max))
                .collect()
        })
        .collect();
    m1_grid
        .iter()
        .map(|&m1| {
            let k: Vec<usize> = (0..t_grid.len())
                .map(|j| reach.iter().filter(|r| r[j] >= m1 * t_grid[j]).count())
                .collect();
            let n = vec![records.len(); t_grid.len()];
            let decay = fit_probability_decay(t_grid, &k, &n)?;
            Ok(GrowthCheck { constant: m1, clean: clean(&decay), decay })
        })
        .collect()
}

/// (ALL): for each `M2`, the fraction of (run, site) pairs with
/// `t(x) ≥ M2‖x‖ + t`; sites never hit count as exceeding. Records should
/// come from surviving runs.
pub fn check_all(
    records: &[HitRecord],
    sites: &[crate::lattice::Site],
    m2_grid: &[f64],
    t_grid: &[f64],
    norm: NormKind,
) -> Result<Vec<GrowthCheck>> {
    if records.is_empty() || sites.is_empty() {
        return Err(Error::InsufficientData("no hit records or sites".into()));
    }
    m2_grid
        .iter()
        .map(|&m2| {
            let mut k = vec![0; t_grid.len()];
            let mut n = vec![0; t_grid.len()];
            for rec in records {
                for x in sites {
                    let h = rec.get(x).unwrap_or(f64::INFINITY);
                    let nx = crate::lattice::norm(x, norm);
                    for (j, &t) in t_grid.iter().enumerate() {
                        n[j] += 1;
                        if h >= m2 * nx + t {
                            k[j] += 1;
                        }
                    }
                }
            }
            let decay = fit_probability_decay(t_grid, &k, &n)?;
            Ok(GrowthCheck { constant: m2, clean: clean(&decay), decay })
        })
        .collect()
}

/// Smallest grid constant with a clean decay.
pub fn smallest_clean(checks: &[GrowthCheck]) -> Option<f64> {
    checks.iter().filter(|c| c.clean).map(|c| c.constant).fold(None, |a, c| Some(a.map_or(c, |a: f64| a.min(c))))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CountTail {
    /// `(k, P(K ≥ k), lo, hi)` for `k = 1, 2, …` while the count is at least 5.
    pub survival: Vec<(usize, f64, f64, f64)>,
    /// Quadratic coefficient of `log P(K ≥ k)` in `k`, with its standard error.
    pub curvature: Option<(f64, f64)>,
    /// Linear slope of `log P(K ≥ k)`.
    pub slope: Option<f64>,
}

impl CountTail {
    pub fn decreasing_to(&self, k: usize) -> bool {
        (1..k).all(|i| match (self.survival.get(i - 1), self.survival.get(i)) {
            (Some(a), Some(b)) => b.1 < a.1,
            (Some(_), None) => true,
            _ => false,
        }) && self.survival.len() >= k.min(2)
    }

    /// Log-survival is linear or concave: the curvature is not significantly
    /// positive, and the slope is negative.
    pub fn concave_or_linear(&self) -> bool {
        let convex = self.curvature.is_some_and(|(c, se)| c > 2.0 * se);
        !convex && self.slope.is_some_and(|s| s < 0.0)
    }
}

/// Survival function of a positive integer count and its log-trend.
pub fn count_tail(ks: &[usize]) -> Result<CountTail> {
    if ks.is_empty() {
        return Err(Error::InsufficientData("no counts".into()));
    }
    let n = ks.len();
    let mut survival = Vec::new();
    for k in 1.. {
        let c = ks.iter().filter(|&&v| v >= k).count();
        if c < 5 {
            break;
        }
        let (lo, hi) = wilson(c, n, Z95);
        survival.push((k, c as f64 / n as f64, lo, hi));
    }
    let pts: Vec<&(usize, f64, f64, f64)> = survival.iter().filter(|p| p.1 < 1.0).collect();
    let xs: Vec<f64> = pts.iter().map(|p| p.0 as f64).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let ws: Vec<f64> = pts.iter().map(|p| n as f64 * p.1 / (1.0 - p.1)).collect();
    let slope = if xs.len() >= 2 { wls(&xs, &ys, &ws).ok().map(|f| f.slope) } else { None };
    let curvature = if xs.len() >= 4 { quadratic_curvature(&xs, &ys, &ws) } else { None };
    Ok(CountTail { survival, curvature, slope })
}

/// Weighted quadratic fit; returns the `x²` coefficient and its standard error.
fn quadratic_curvature(x: &[f64], y: &[f64], w: &[f64]) -> Option<(f64, f64)> {
    let mut a = [[0.0f64; 3]; 3];
    let mut b = [0.0f64; 3];
    for ((&xi, &yi), &wi) in x.iter().zip(y).zip(w) {
        let f = [1.0, xi, xi * xi];
        for r in 0..3 {
            b[r] += wi * f[r] * yi;
            for c in 0..3 {
                a[r][c] += wi * f[r] * f[c];
            }
        }
    }
    let inv = invert3(a)?;
    let coef: f64 = (0..3).map(|c| inv[2][c] * b[c]).sum();
    let beta: Vec<f64> = (0..3).map(|r| (0..3).map(|c| inv[r][c] * b[c]).sum()).collect();
    let rss: f64 = x
        .iter()
        .zip(y)
        .zip(w)
        .map(|((&xi, &yi), &wi)| wi * (yi - beta[0] - beta[1] * xi - beta[2] * xi * xi).powi(2))
        .sum();
    // inverse-variance weights: scale by the reduced χ² only when it exceeds 1
    let dof = x.len().saturating_sub(3).max(1) as f64;
    let scale = (rss / dof).max(1.0);
    Some((coef, (inv[2][2] * scale).sqrt()))
}

fn invert3(m: [[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    if det.abs() < 1e-300 {
        return None;
    }
    let mut r = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (a, b) = ((j + 1) % 3, (j + 2) % 3);
            let (c, d) = ((i + 1) % 3, (i + 2) % 3);
            r[i][j] = (m[a][c] * m[b][d] - m[a][d] * m[b][c]) / det;
        }
    }
    Some(r)
}
