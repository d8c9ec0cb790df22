//! `A_t`, `H_t`, `t(x)` and `τ` read off trajectories.

use std::fmt::Write as _;

use serde::Serialize;

use crate::engine::Trajectory;
use crate::error::{Error, Result};
use crate::lattice::{Site, SiteSet, Window};

/// `A_t`: sites satisfying the property at time `t`.
pub fn alive_set(tr: &Trajectory, t: f64) -> Result<SiteSet> {
    check(tr, t)?;
    let mut set = SiteSet::empty(tr.window());
    if tr.extinct_at().is_some_and(|e| t >= e) {
        return Ok(set);
    }
    let c = tr.config_at(t)?;
    let m = tr.model();
    for (i, &s) in c.values().iter().enumerate() {
        if m.property(s) {
            set.insert_index(i);
        }
    }
    Ok(set)
}

/// `H_t = ∪_{s ≤ t} A_s = {x : t(x) ≤ t}`.
pub fn coverage(tr: &Trajectory, t: f64) -> Result<SiteSet> {
    check(tr, t)?;
    Ok(SiteSet::from_indices(
        tr.window(),
        tr.first_hits().iter().enumerate().filter(|(_, &h)| h <= t).map(|(i, _)| i),
    ))
}

fn check(tr: &Trajectory, t: f64) -> Result<()> {
    if t < tr.start() || t > tr.end() {
        return Err(Error::TimeOutOfRange { t, start: tr.start(), end: tr.end() });
    }
    Ok(())
}

/// First-hit times `t(x)`; sites never hit within the horizon are absent.
#[derive(Clone, Debug)]
pub struct HitRecord {
    window: Window,
    hits: Vec<f64>,
    horizon: f64,
    truncated: bool,
}

impl HitRecord {
    pub fn new(window: Window, hits: Vec<f64>, horizon: f64, truncated: bool) -> Result<Self> {
        if hits.len() != window.len() {
            return Err(Error::WindowMismatch(format!("{} hit times for {} sites", hits.len(), window.len())));
        }
        Ok(HitRecord { window, hits, horizon, truncated })
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn truncated(&self) -> bool {
        self.truncated
    }

    pub fn get(&self, x: &Site) -> Option<f64> {
        self.window.index(x).and_then(|i| self.get_index(i))
    }

    pub fn get_index(&self, i: usize) -> Option<f64> {
        let h = self.hits[i];
        (h <= self.horizon).then_some(h)
    }

    /// Raw per-index times, `∞` for absent entries.
    pub fn raw(&self) -> &[f64] {
        &self.hits
    }

    /// `(index, t(x))` for every hit site, in index order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.hits.len()).filter_map(|i| self.get_index(i).map(|h| (i, h)))
    }

    pub fn len(&self) -> usize {
        self.entries().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// CSV with columns `x1..xd,t_hit`.
    pub fn to_csv(&self) -> String {
        let d = self.window.dim();
        let mut s = (1..=d).map(|i| format!("x{i}")).collect::<Vec<_>>().join(",");
        s.push_str(",t_hit\n");
        let mut c = vec![0i32; d];
        for (i, h) in self.entries() {
            self.window.coords_into(i, &mut c);
            for v in &c {
                let _ = write!(s, "{v},");
            }
            let _ = writeln!(s, "{h:?}");
        }
        s
    }
}

pub fn hit_times(tr: &Trajectory) -> HitRecord {
    HitRecord {
        window: tr.window().clone(),
        hits: tr.first_hits().to_vec(),
        horizon: tr.end(),
        truncated: tr.truncated(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Died { tau: f64 },
    /// Alive at the end of the record; `τ` is not observed.
    SurvivedCensored { alive_at: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurvivalVerdict {
    pub outcome: Outcome,
    pub horizon: f64,
    pub truncated: bool,
    /// Upper bound `C1·exp(−C2·margin)` on the chance that a censored
    /// survivor dies later, when (SC) constants are supplied.
    pub misclassification: Option<f64>,
}

impl SurvivalVerdict {
    pub fn died(&self) -> bool {
        matches!(self.outcome, Outcome::Died { .. })
    }

    pub fn tau(&self) -> Option<f64> {
        match self.outcome {
            Outcome::Died { tau } => Some(tau),
            Outcome::SurvivedCensored { .. } => None,
        }
    }

    /// Whether the property set was still nonempty at `t`.
    pub fn alive_at(&self, t: f64) -> bool {
        match self.outcome {
            Outcome::Died { tau } => tau > t,
            Outcome::SurvivedCensored { alive_at } => t <= alive_at,
        }
    }

    /// Attaches the (SC) misclassification bound for a survivor, given the
    /// time since the process started.
    pub fn with_sc_bound(mut self, c1: f64, c2: f64, age: f64) -> Self {
        if !self.died() {
            self.misclassification = Some((c1 * (-c2 * age).exp()).min(1.0));
        }
        self
    }

    /// One JSON object: `{replica, seed, outcome, tau, horizon, truncated}`.
    pub fn to_json(&self, replica: u64, seed: u64) -> serde_json::Value {
        let (outcome, tau) = match self.outcome {
            Outcome::Died { tau } => ("died", serde_json::json!(tau)),
            Outcome::SurvivedCensored { .. } => ("survived_censored", serde_json::Value::Null),
        };
        let mut v = serde_json::json!({
            "replica": replica,
            "seed": seed,
            "outcome": outcome,
            "tau": tau,
            "horizon": self.horizon,
            "truncated": self.truncated,
        });
        if let Some(b) = self.misclassification {
            v["misclassification_bound"] = serde_json::json!(b);
        }
        v
    }
}

pub fn extinction(tr: &Trajectory) -> SurvivalVerdict {
    verdict(tr.extinct_at(), tr.end(), tr.truncated())
}

pub(crate) fn verdict(extinct_at: Option<f64>, end: f64, truncated: bool) -> SurvivalVerdict {
    SurvivalVerdict {
        outcome: match extinct_at {
            Some(tau) => Outcome::Died { tau },
            None => Outcome::SurvivedCensored { alive_at: end },
        },
        horizon: end,
        truncated,
        misclassification: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{run, EventLog};
    use crate::models::{min_config, Configuration, ModelSpec};

    fn traj(lambda: f64, t: f64, seed: u64) -> Trajectory {
        let m = ModelSpec::classical_cp(lambda).unwrap();
        let w = Window::new(1, 40).unwrap();
        let log = EventLog::new(&m, &w, t, seed).unwrap();
        run(&m, &log, &min_config(&m, &Site::origin(1), &w).unwrap(), 0.0, t).unwrap()
    }

    #[test]
    fn start_sets_are_the_origin() {
        let tr = traj(2.0, 10.0, 3);
        let a = alive_set(&tr, 0.0).unwrap();
        assert_eq!(a.sites().collect::<Vec<_>>(), vec![Site::origin(1)]);
        assert_eq!(coverage(&tr, 0.0).unwrap().len(), 1);
        assert_eq!(hit_times(&tr).get(&Site::origin(1)), Some(0.0));
    }

    #[test]
    fn consistency_between_views() {
        for seed in 0..20 {
            let tr = traj(2.0, 15.0, seed);
            let rec = hit_times(&tr);
            let mut prev = 0;
            for j in tr.jumps().iter().step_by(7) {
                let a = alive_set(&tr, j.time).unwrap();
                let h = coverage(&tr, j.time).unwrap();
                assert!(a.is_subset(&h));
                let from_rec = rec.entries().filter(|&(_, t)| t <= j.time).count();
                assert_eq!(from_rec, h.len());
                assert!(h.len() >= prev);
                prev = h.len();
            }
            if let Some(tau) = extinction(&tr).tau() {
                assert!(alive_set(&tr, tau).unwrap().is_empty());
                assert!(alive_set(&tr, 15.0).unwrap().is_empty());
            }
        }
    }

    #[test]
    fn empty_start_dies_at_start() {
        let m = ModelSpec::classical_cp(2.0).unwrap();
        let w = Window::new(1, 3).unwrap();
        let log = EventLog::new(&m, &w, 5.0, 1).unwrap();
        let tr = run(&m, &log, &Configuration::minimal(&w), 1.0, 5.0).unwrap();
        assert_eq!(extinction(&tr).outcome, Outcome::Died { tau: 1.0 });
        assert!(hit_times(&tr).is_empty());
    }

    #[test]
    fn subcritical_dies() {
        let died = (0..1000).filter(|&s| extinction(&traj(0.1, 200.0, s)).died()).count();
        assert!(died >= 990, "{died}");
    }

    #[test]
    fn neighbour_hit_time_decreases_in_lambda() {
        let mean = |l: f64| {
            let v: Vec<f64> = (0..400)
                .filter_map(|s| hit_times(&traj(l, 30.0, 1000 + s)).get(&Site::new(vec![1])))
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        let (a, b, c) = (mean(1.0), mean(2.0), mean(4.0));
        assert!(a > b && b > c, "{a} {b} {c}");
    }

    #[test]
    fn csv_and_json_shapes() {
        let tr = traj(2.0, 5.0, 9);
        let csv = hit_times(&tr).to_csv();
        assert!(csv.starts_with("x1,t_hit\n0,0.0\n") || csv.starts_with("x1,t_hit\n"));
        assert!(csv.lines().any(|l| l == "0,0.0"));
        let v = extinction(&tr).to_json(4, 77);
        for k in ["replica", "seed", "outcome", "tau", "horizon", "truncated"] {
            assert!(v.get(k).is_some(), "{k}");
        }
        let s = SurvivalVerdict {
            outcome: Outcome::SurvivedCensored { alive_at: 5.0 },
            horizon: 5.0,
            truncated: false,
            misclassification: None,
        };
        assert!(s.to_json(0, 0)["tau"].is_null());
        assert!(s.with_sc_bound(1.0, 1.0, 5.0).misclassification.unwrap() < 0.01);
    }
}
