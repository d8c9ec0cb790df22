//! Directional speeds, the reconstructed unit ball `B_μ̂`, and inclusion of
//! the scaled coverage `G̃_t / t`.

use std::collections::HashSet;

use serde::Serialize;

use super::stats::{mean_se, ols};
use crate::error::{Error, Result};
use crate::lattice::Site;
use crate::observables::HitRecord;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpeedEstimate {
    pub direction: Site,
    /// Time per step along `direction`: slope of `t(n·x)` against `n`.
    pub mu: f64,
    pub se: f64,
    /// Replicas with a finite time at every grid point.
    pub replicas: usize,
}

/// `μ̂(x)` as the mean over replicas of per-replica OLS slopes of the
/// sampled time at `n·x` against `n` (equal to the slope of the mean curve).
/// Replicas with an infinite sample are skipped.
pub fn estimate_speed(direction: &Site, n_grid: &[f64], samples: &[Vec<f64>]) -> Result<SpeedEstimate> {
    if n_grid.len() < 3 {
        return Err(Error::InsufficientData("speed estimation needs at least 3 grid points".into()));
    }
    let slopes: Vec<f64> = samples
        .iter()
        .filter(|s| s.len() == n_grid.len() && s.iter().all(|v| v.is_finite()))
        .map(|s| ols(n_grid, s).map(|f| f.slope))
        .collect::<Result<_>>()?;
    if slopes.len() < 2 {
        return Err(Error::InsufficientData(format!("{} complete replicas for direction {direction}", slopes.len())));
    }
    let (mu, se) = mean_se(&slopes);
    Ok(SpeedEstimate { direction: direction.clone(), mu, se, replicas: slopes.len() })
}

/// `t(n·x)` for each record and grid point (`∞` where not hit).
pub fn hit_samples(records: &[&HitRecord], direction: &Site, n_grid: &[i32]) -> Vec<Vec<f64>> {
    records
        .iter()
        .map(|r| n_grid.iter().map(|&n| r.get(&direction.scale(n)).unwrap_or(f64::INFINITY)).collect())
        .collect()
}

/// `±e_1` in d = 1; in d = 2 the axes and diagonals (coordinates in
/// `{−1, 0, 1}`), which already pin down a convex hull with 8 vertices.
pub fn default_directions(dim: usize) -> Result<Vec<Site>> {
    if !(1..=2).contains(&dim) {
        return Err(Error::InvalidParameter(format!("shape reconstruction supports d <= 2, got {dim}")));
    }
    if dim == 1 {
        return Ok(vec![Site::new(vec![1]), Site::new(vec![-1])]);
    }
    // e1 first: `compare_sigma` follows the first direction
    Ok([[1, 0], [-1, 0], [0, 1], [0, -1], [1, 1], [-1, -1], [1, -1], [-1, 1]]
        .into_iter()
        .map(|c| Site::new(c.to_vec()))
        .collect())
}

/// The symmetrized convex hull of `±x/μ̂(x)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ShapeEstimate {
    pub dim: usize,
    pub speeds: Vec<SpeedEstimate>,
    /// `μ̂` averaged over `x` and `−x`, in the order of `speeds`.
    pub symmetric_mu: Vec<f64>,
    /// Hull vertices in counter-clockwise order (d = 2), or `[−a], [a]` (d = 1).
    pub vertices: Vec<Vec<f64>>,
}

impl ShapeEstimate {
    pub fn new(speeds: Vec<SpeedEstimate>) -> Result<Self> {
        let dim = speeds.first().map(|s| s.direction.dim()).unwrap_or(0);
        if !(1..=2).contains(&dim) || speeds.iter().any(|s| s.direction.dim() != dim) {
            return Err(Error::InvalidParameter("speeds must share a dimension of 1 or 2".into()));
        }
        if speeds.iter().any(|s| !(s.mu > 0.0) || !s.mu.is_finite()) {
            return Err(Error::InvalidParameter("directional time constants must be positive".into()));
        }
        let symmetric_mu: Vec<f64> = speeds
            .iter()
            .map(|s| {
                let neg = -&s.direction;
                match speeds.iter().find(|o| o.direction == neg) {
                    Some(o) => 0.5 * (s.mu + o.mu),
                    None => s.mu,
                }
            })
            .collect();
        let mut pts: Vec<[f64; 2]> = Vec::new();
        for (s, &mu) in speeds.iter().zip(&symmetric_mu) {
            let c = s.direction.coords();
            let p = [c[0] as f64 / mu, if dim == 2 { c[1] as f64 / mu } else { 0.0 }];
            pts.push(p);
            pts.push([-p[0], -p[1]]);
        }
        let vertices = if dim == 1 {
            let a = pts.iter().map(|p| p[0].abs()).fold(0.0, f64::max);
            vec![vec![-a], vec![a]]
        } else {
            let hull = convex_hull(&pts);
            if hull.len() < 3 {
                return Err(Error::InsufficientData("reconstructed ball has an empty interior".into()));
            }
            hull.into_iter().map(|p| p.to_vec()).collect()
        };
        Ok(ShapeEstimate { dim, speeds, symmetric_mu, vertices })
    }

    /// Minkowski functional of the reconstructed ball.
    pub fn gauge(&self, p: &[f64]) -> f64 {
        if self.dim == 1 {
            return p[0].abs() / self.vertices[1][0];
        }
        let v = &self.vertices;
        let n = v.len();
        let mut g: f64 = 0.0;
        for i in 0..n {
            let (a, b) = (&v[i], &v[(i + 1) % n]);
            // outward normal of a CCW edge
            let nx = b[1] - a[1];
            let ny = a[0] - b[0];
            let h = nx * a[0] + ny * a[1];
            g = g.max((nx * p[0] + ny * p[1]) / h);
        }
        g
    }

    /// `μ̂(x) = μ̂(−x)` within `k` joint standard errors for every pair.
    pub fn symmetric_within(&self, k: f64) -> bool {
        self.asymmetries().iter().all(|&(_, diff, se)| diff <= k * se)
    }

    /// `(direction, |μ̂(x) − μ̂(−x)|, joint stderr)` for each pair.
    pub fn asymmetries(&self) -> Vec<(Site, f64, f64)> {
        let mut out = Vec::new();
        for s in &self.speeds {
            let neg = -&s.direction;
            if neg < s.direction {
                continue;
            }
            if let Some(o) = self.speeds.iter().find(|o| o.direction == neg) {
                out.push((s.direction.clone(), (s.mu - o.mu).abs(), (s.se * s.se + o.se * o.se).sqrt()));
            }
        }
        out
    }

    /// `direction,mu,se,mu_sym,replicas` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("direction,mu,se,mu_sym,replicas\n");
        for (e, m) in self.speeds.iter().zip(&self.symmetric_mu) {
            s.push_str(&format!("\"{}\",{:?},{:?},{:?},{}\n", e.direction, e.mu, e.se, m, e.replicas));
        }
        s
    }
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Andrew's monotone chain; counter-clockwise, collinear points dropped.
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut p = points.to_vec();
    p.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for &q in &p {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], q) <= 0.0 {
            lower.pop();
        }
        lower.push(q);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for &q in p.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], q) <= 0.0 {
            upper.pop();
        }
        upper.push(q);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// `G̃_t = {x : t(x) ≤ t} + [0,1]^d`, kept as its lattice points.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub dim: usize,
    pub covered: Vec<Vec<i32>>,
    /// Some covered site lies on the window boundary.
    pub truncated: bool,
}

pub fn shape_snapshot(rec: &HitRecord, t: f64) -> Result<Snapshot> {
    if !(t > 0.0) || t > rec.horizon() {
        return Err(Error::TimeOutOfRange { t, start: 0.0, end: rec.horizon() });
    }
    let w = rec.window();
    let mut truncated = false;
    let covered = rec
        .entries()
        .filter(|&(_, h)| h <= t)
        .map(|(i, _)| {
            truncated |= w.on_boundary(i);
            w.site(i).coords().to_vec()
        })
        .collect();
    Ok(Snapshot { t, dim: w.dim(), covered, truncated })
}

impl Snapshot {
    /// Centres of the scaled cubes, one row per cube.
    pub fn to_csv(&self) -> String {
        let mut s = (1..=self.dim).map(|i| format!("x{i}")).collect::<Vec<_>>().join(",");
        s.push('\n');
        for c in &self.covered {
            let row: Vec<String> = c.iter().map(|&v| format!("{:?}", (v as f64 + 0.5) / self.t)).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }

    fn boundary_points(&self) -> Vec<Vec<f64>> {
        let set: HashSet<&Vec<i32>> = self.covered.iter().collect();
        self.covered
            .iter()
            .filter(|c| {
                (0..self.dim).any(|k| {
                    [-1, 1].iter().any(|&dx| {
                        let mut n = (*c).clone();
                        n[k] += dx;
                        !set.contains(&n)
                    })
                })
            })
            .map(|c| c.iter().map(|&v| (v as f64 + 0.5) / self.t).collect())
            .collect()
    }
}

/// Hausdorff distance between the boundary cube centres of two scaled
/// snapshots (Euclidean).
pub fn hausdorff(a: &Snapshot, b: &Snapshot) -> f64 {
    let pa = a.boundary_points();
    let pb = b.boundary_points();
    let dist = |p: &Vec<f64>, q: &Vec<f64>| p.iter().zip(q).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let directed = |u: &[Vec<f64>], v: &[Vec<f64>]| {
        u.iter().map(|p| v.iter().map(|q| dist(p, q)).fold(f64::INFINITY, f64::min)).fold(0.0, f64::max)
    };
    directed(&pa, &pb).max(directed(&pb, &pa))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InclusionReport {
    pub t: f64,
    pub eps: f64,
    /// Covered cubes reaching outside `(1+ε) B_μ̂`.
    pub outer_violations: Vec<Vec<i32>>,
    /// Uncovered cubes meeting `(1−ε) B_μ̂`.
    pub inner_violations: Vec<Vec<i32>>,
    pub truncated: bool,
}

impl InclusionReport {
    /// No violations, and the snapshot was not cut by the window.
    pub fn pass(&self) -> bool {
        !self.truncated && self.outer_violations.is_empty() && self.inner_violations.is_empty()
    }
}

fn corners(c: &[i32]) -> Vec<Vec<f64>> {
    let d = c.len();
    (0..1usize << d)
        .map(|m| (0..d).map(|k| c[k] as f64 + ((m >> k) & 1) as f64).collect())
        .collect()
}

/// `(1−ε) B_μ̂ ⊂ G̃_t/t ⊂ (1+ε) B_μ̂`. The outer side is exact (a cube lies in
/// a convex set iff its corners do); on the inner side a cube is taken to
/// meet the ball when a corner or its centre lies strictly inside.
pub fn check_inclusion(shape: &ShapeEstimate, snap: &Snapshot, eps: f64) -> Result<InclusionReport> {
    if snap.dim != shape.dim {
        return Err(Error::InvalidParameter("snapshot and shape dimensions differ".into()));
    }
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::InvalidParameter(format!("eps = {eps} must lie in [0, 1)")));
    }
    let t = snap.t;
    let scaled = |p: Vec<f64>| -> Vec<f64> { p.into_iter().map(|v| v / t).collect() };
    let outer_violations = snap
        .covered
        .iter()
        .filter(|c| corners(c).into_iter().any(|p| shape.gauge(&scaled(p)) > 1.0 + eps))
        .cloned()
        .collect();
    let set: HashSet<&Vec<i32>> = snap.covered.iter().collect();
    let reach: Vec<i32> = (0..shape.dim)
        .map(|k| {
            let r = shape.vertices.iter().map(|v| v[k].abs()).fold(0.0, f64::max);
            (r * (1.0 - eps) * t).ceil() as i32 + 1
        })
        .collect();
    let mut inner_violations = Vec::new();
    let mut c = reach.iter().map(|r| -r).collect::<Vec<i32>>();
    'outer: loop {
        let inside = |p: Vec<f64>| shape.gauge(&scaled(p)) < 1.0 - eps;
        let centre: Vec<f64> = c.iter().map(|&v| v as f64 + 0.5).collect();
        if !set.contains(&c) && (inside(centre) || corners(&c).into_iter().any(inside)) {
            inner_violations.push(c.clone());
        }
        for k in 0..c.len() {
            c[k] += 1;
            if c[k] <= reach[k] {
                continue 'outer;
            }
            c[k] = -reach[k];
        }
        break;
    }
    Ok(InclusionReport { t, eps, outer_violations, inner_violations, truncated: snap.truncated })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn speed(d: Vec<i32>, mu: f64) -> SpeedEstimate {
        SpeedEstimate { direction: Site::new(d), mu, se: 0.01, replicas: 10 }
    }

    fn diamond() -> ShapeEstimate {
        // μ = L1 norm: every primitive direction x has μ(x) = ‖x‖₁
        let speeds = default_directions(2)
            .unwrap()
            .into_iter()
            .map(|d| {
                let n = d.coords().iter().map(|v| v.abs()).sum::<i32>() as f64;
                SpeedEstimate { direction: d, mu: n, se: 0.01, replicas: 10 }
            })
            .collect();
        ShapeEstimate::new(speeds).unwrap()
    }

    #[test]
    fn directions_are_primitive() {
        let d = default_directions(2).unwrap();
        assert_eq!(d.len(), 8);
        assert!(d.contains(&Site::new(vec![1, -1])) && !d.contains(&Site::new(vec![0, 0])));
        assert!(default_directions(3).is_err());
    }

    #[test]
    fn hull_and_gauge_of_l1_ball() {
        let s = diamond();
        assert_eq!(s.vertices.len(), 4);
        assert!((s.gauge(&[0.5, 0.5]) - 1.0).abs() < 1e-12);
        assert!((s.gauge(&[2.0, 0.0]) - 2.0).abs() < 1e-12);
        assert!((s.gauge(&[-0.3, 0.1]) - 0.4).abs() < 1e-12);
        assert!(s.symmetric_within(2.0));
    }

    #[test]
    fn one_dimensional_interval() {
        let s = ShapeEstimate::new(vec![speed(vec![1], 2.0), speed(vec![-1], 2.2)]).unwrap();
        assert!((s.vertices[1][0] - 1.0 / 2.1).abs() < 1e-12);
        assert!((s.gauge(&[-1.0 / 2.1]) - 1.0).abs() < 1e-12);
        assert!(!s.symmetric_within(2.0));
    }

    #[test]
    fn ball_itself_passes_and_zero_slack_fails() {
        let s = diamond();
        let t = 40.0;
        // lattice cubes inside t·B
        let mut covered = Vec::new();
        for a in -45..=45 {
            for b in -45..=45 {
                let c = vec![a, b];
                if corners(&c).iter().all(|p| s.gauge(&[p[0] / t, p[1] / t]) <= 1.0) {
                    covered.push(c);
                }
            }
        }
        let snap = Snapshot { t, dim: 2, covered, truncated: false };
        assert!(check_inclusion(&s, &snap, 0.1).unwrap().pass());
        assert!(!check_inclusion(&s, &snap, 0.0).unwrap().pass());
        let shrunk = Snapshot { t: t * 1.5, ..snap.clone() };
        let r = check_inclusion(&s, &shrunk, 0.1).unwrap();
        assert!(r.outer_violations.is_empty() && !r.inner_violations.is_empty());
        assert!(hausdorff(&snap, &snap) == 0.0);
    }

    #[test]
    fn speed_from_linear_samples() {
        let grid = [1.0, 2.0, 3.0, 4.0];
        let samples = vec![vec![2.0, 4.0, 6.0, 8.0], vec![1.0, 3.0, 5.0, 7.0], vec![2.0, f64::INFINITY, 1.0, 1.0]];
        let e = estimate_speed(&Site::new(vec![1]), &grid, &samples).unwrap();
        assert_eq!(e.replicas, 2);
        assert!((e.mu - 2.0).abs() < 1e-12);
        assert!(estimate_speed(&Site::new(vec![1]), &grid[..2], &samples).is_err());
    }
}
