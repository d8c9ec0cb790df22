//! Small statistical toolkit: KS tests, Pearson χ², Wilson intervals, OLS.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Kolmogorov distribution tail `Q(λ) = 2 Σ (−1)^{k−1} exp(−2k²λ²)`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn ks_p(d: f64, ne: f64) -> f64 {
    let s = ne.sqrt();
    kolmogorov_q((s + 0.12 + 0.11 / s) * d)
}

/// One-sample Kolmogorov–Smirnov test against a continuous CDF.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<TestResult> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("KS test on an empty sample".into()));
    }
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &v) in x.iter().enumerate() {
        let f = cdf(v);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Ok(TestResult { statistic: d, p_value: ks_p(d, n) })
}

/// Two-sample Kolmogorov–Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData("KS test on an empty sample".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = a[i].min(b[j]);
        while i < n && a[i] <= v {
            i += 1;
        }
        while j < m && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    Ok(TestResult { statistic: d, p_value: ks_p(d, ne) })
}

/// Upper tail of the χ² distribution.
pub fn chi2_sf(stat: f64, dof: usize) -> f64 {
    if dof == 0 {
        return if stat > 0.0 { 0.0 } else { 1.0 };
    }
    let c = ChiSquared::new(dof as f64).expect("positive dof");
    c.sf(stat)
}

/// Pearson goodness of fit. Adjacent cells are pooled until every expected
/// count is at least `min_expected`; `fitted` parameters reduce the dof.
pub fn chi_square_gof(observed: &[f64], expected: &[f64], fitted: usize, min_expected: f64) -> Result<TestResult> {
    if observed.len() != expected.len() {
        return Err(Error::InvalidParameter("observed and expected lengths differ".into()));
    }
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (&oi, &ei) in observed.iter().zip(expected) {
        o += oi;
        e += ei;
        if e >= min_expected {
            cells.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => cells.push((o, e)),
        }
    }
    if cells.len() < fitted + 2 {
        return Err(Error::InsufficientData(format!(
            "{} usable cells for a fit with {fitted} parameters",
            cells.len()
        )));
    }
    let stat: f64 = cells.iter().map(|&(o, e)| (o - e) * (o - e) / e).sum();
    let dof = cells.len() - 1 - fitted;
    Ok(TestResult { statistic: stat, p_value: chi2_sf(stat, dof) })
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let den = 1.0 + z2 / n;
    let mid = (p + z2 / (2.0 * n)) / den;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / den;
    ((mid - half).max(0.0), (mid + half).min(1.0))
}

/// Mean and its standard error.
pub fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
    /// Weighted residual sum of squares (a χ² statistic when weights are
    /// inverse variances).
    pub rss: f64,
}

/// Weighted least squares `y ≈ a + b x`; weights are inverse variances.
pub fn wls(x: &[f64], y: &[f64], w: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() != w.len() || x.len() < 2 {
        return Err(Error::InsufficientData("weighted regression needs two points".into()));
    }
    let sw: f64 = w.iter().sum();
    let sx: f64 = x.iter().zip(w).map(|(a, w)| a * w).sum();
    let sy: f64 = y.iter().zip(w).map(|(a, w)| a * w).sum();
    let sxx: f64 = x.iter().zip(w).map(|(a, w)| a * a * w).sum();
    let sxy: f64 = x.iter().zip(y).zip(w).map(|((a, b), w)| a * b * w).sum();
    let det = sw * sxx - sx * sx;
    if det <= 0.0 {
        return Err(Error::InsufficientData("degenerate regression design".into()));
    }
    let slope = (sw * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    let rss = x
        .iter()
        .zip(y)
        .zip(w)
        .map(|((a, b), w)| w * (b - intercept - slope * a).powi(2))
        .sum();
    Ok(LinearFit { slope, intercept, slope_se: (sw / det).sqrt(), intercept_se: (sxx / det).sqrt(), rss })
}

/// Ordinary least squares, with standard errors from the residual variance.
pub fn ols(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let w = vec![1.0; x.len()];
    let mut f = wls(x, y, &w)?;
    if x.len() > 2 {
        let s2 = f.rss / (x.len() - 2) as f64;
        f.slope_se *= s2.sqrt();
        f.intercept_se *= s2.sqrt();
    } else {
        f.slope_se = f64::NAN;
        f.intercept_se = f64::NAN;
    }
    Ok(f)
}

/// Sample Pearson correlation.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 3 {
        return Err(Error::InsufficientData("correlation needs three paired samples".into()));
    }
    let (ma, _) = mean_se(a);
    let (mb, _) = mean_se(b);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::InsufficientData("correlation of a constant sample".into()));
    }
    Ok(sab / (saa * sbb).sqrt())
}
