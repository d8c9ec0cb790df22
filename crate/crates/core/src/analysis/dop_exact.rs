//! Exact law of dependent oriented percolation on a tiny window, by
//! enumerating every Bernoulli outcome of each step.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::engine::{replica_seed, EventLog, Sim};
use crate::error::{Error, Result};
use crate::lattice::{Window, OUTSIDE};
use crate::models::{Configuration, Dynamics, ModelSpec, State};

/// Largest number of Bernoulli outcomes enumerated for one configuration.
pub const MAX_OUTCOMES: u64 = 1 << 24;

pub type Law = BTreeMap<Vec<State>, f64>;

/// Exact distribution of the configuration after `steps` steps.
///
/// Phase A: every occupied site `y` sends a particle of its own type along
/// each out-edge with probability `p` (type 1) or `q` (type 2); a site takes
/// the largest type received. Phase B: each site independently becomes type
/// 2 with probability `α`.
pub fn dop_exact(m: &ModelSpec, window: &Window, steps: u32, init: &Configuration) -> Result<Law> {
    let Dynamics::Dop { p, q, alpha, include_self } = *m.dynamics() else {
        return Err(Error::InvalidParameter(format!("dop_exact needs a dop model, got {}", m.name())));
    };
    if init.window() != window {
        return Err(Error::WindowMismatch("initial configuration is not on the window".into()));
    }
    let n = window.len();
    let deg = window.degree();
    let mut law: Law = BTreeMap::new();
    law.insert(init.values().to_vec(), 1.0);
    let random_alpha = alpha > 0.0 && alpha < 1.0;
    for _ in 0..steps {
        let mut next: Law = BTreeMap::new();
        for (cfg, &w) in &law {
            // independent attempts: (source state, target) with success probability
            let mut attempts: Vec<(State, usize, f64)> = Vec::new();
            for (y, &s) in cfg.iter().enumerate() {
                if s == 0 {
                    continue;
                }
                let pr = if s == 2 { q } else { p };
                for k in 0..deg {
                    let x = window.neighbor(y, k);
                    if x != OUTSIDE {
                        attempts.push((s, x as usize, pr));
                    }
                }
                if include_self {
                    attempts.push((s, y, pr));
                }
            }
            // certain outcomes do not need enumeration
            let mut base = vec![0 as State; n];
            let mut free: Vec<(State, usize, f64)> = Vec::new();
            for a in attempts {
                if a.2 >= 1.0 {
                    base[a.1] = base[a.1].max(a.0);
                } else if a.2 > 0.0 {
                    free.push(a);
                }
            }
            let n_imm = if random_alpha { n } else { 0 };
            let bits = free.len() + n_imm;
            if bits >= 64 || (1u64 << bits) > MAX_OUTCOMES {
                return Err(Error::Capacity(format!(
                    "{bits} Bernoulli variables per step exceed the enumeration limit of 2^24 outcomes"
                )));
            }
            for mask in 0u64..(1u64 << bits) {
                let mut c = base.clone();
                let mut pr = w;
                for (i, &(s, x, a)) in free.iter().enumerate() {
                    if mask >> i & 1 == 1 {
                        c[x] = c[x].max(s);
                        pr *= a;
                    } else {
                        pr *= 1.0 - a;
                    }
                }
                for x in 0..n_imm {
                    if mask >> (free.len() + x) & 1 == 1 {
                        c[x] = 2;
                        pr *= alpha;
                    } else {
                        pr *= 1.0 - alpha;
                    }
                }
                if alpha >= 1.0 {
                    c.iter_mut().for_each(|v| *v = 2);
                }
                if pr > 0.0 {
                    *next.entry(c).or_insert(0.0) += pr;
                }
            }
        }
        law = next;
    }
    Ok(law)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleRow {
    pub config: Vec<State>,
    pub exact: f64,
    pub empirical: f64,
    pub se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleComparison {
    pub replicas: usize,
    pub tv: f64,
    /// `½ Σ_c sqrt(p_c (1 − p_c) / n)`: the combined standard error of the
    /// total variation distance.
    pub tv_se: f64,
    /// Largest per-configuration deviation in standard errors.
    pub max_z: f64,
    pub rows: Vec<OracleRow>,
}

impl OracleComparison {
    /// TV within `k` combined standard errors, and no configuration the
    /// exact law excludes was observed.
    pub fn pass(&self, k: f64) -> bool {
        self.tv <= k * self.tv_se && self.max_z.is_finite()
    }

    pub fn to_table(&self) -> String {
        let mut s = String::from("config,exact,empirical,se\n");
        for r in &self.rows {
            let c: Vec<String> = r.config.iter().map(|v| v.to_string()).collect();
            s.push_str(&format!("{},{:.6},{:.6},{:.6}\n", c.join(""), r.exact, r.empirical, r.se));
        }
        s
    }
}

/// Runs the engine `replicas` times for `steps` steps from `init` and
/// compares the empirical law with [`dop_exact`].
pub fn compare_with_engine(
    m: &ModelSpec,
    window: &Window,
    steps: u32,
    init: &Configuration,
    replicas: usize,
    seed: u64,
) -> Result<OracleComparison> {
    let exact = dop_exact(m, window, steps, init)?;
    let mut counts: BTreeMap<Vec<State>, usize> = BTreeMap::new();
    for r in 0..replicas {
        let log = EventLog::new(m, window, steps as f64, replica_seed(seed, r as u64))?;
        let mut sim = Sim::new(&log, &[init.values()], 0.0, false)?;
        sim.advance(steps as f64, |_| false)?;
        *counts.entry(sim.state(0).to_vec()).or_insert(0) += 1;
    }
    let n = replicas as f64;
    let mut keys: Vec<&Vec<State>> = exact.keys().chain(counts.keys()).collect();
    keys.sort();
    keys.dedup();
    let mut rows = Vec::new();
    let (mut tv, mut tv_se, mut max_z) = (0.0, 0.0, 0.0f64);
    for k in keys {
        let p = exact.get(k).copied().unwrap_or(0.0);
        let e = counts.get(k).copied().unwrap_or(0) as f64 / n;
        let se = (p * (1.0 - p) / n).sqrt();
        tv += 0.5 * (e - p).abs();
        tv_se += 0.5 * se;
        if se > 0.0 {
            max_z = max_z.max((e - p).abs() / se);
        } else if e != p {
            max_z = f64::INFINITY;
        }
        rows.push(OracleRow { config: k.clone(), exact: p, empirical: e, se });
    }
    Ok(OracleComparison { replicas, tv, tv_se, max_z, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Site;
    use crate::models::min_config;

    fn win(r: u32) -> Window {
        Window::new(1, r).unwrap()
    }

    #[test]
    fn deterministic_spread_with_p_one() {
        let m = ModelSpec::dop(1.0, 0.3, 0.0).unwrap();
        let w = win(1);
        let law = dop_exact(&m, &w, 1, &min_config(&m, &Site::origin(1), &w).unwrap()).unwrap();
        assert_eq!(law.len(), 1);
        assert_eq!(law.get(&vec![1, 0, 1]), Some(&1.0));
    }

    #[test]
    fn full_immigration() {
        let m = ModelSpec::dop(0.5, 0.5, 1.0).unwrap();
        let w = win(2);
        let law = dop_exact(&m, &w, 1, &min_config(&m, &Site::origin(1), &w).unwrap()).unwrap();
        assert_eq!(law.get(&vec![2; 5]), Some(&1.0));
    }

    #[test]
    fn law_sums_to_one() {
        let m = ModelSpec::dop(0.7, 0.3, 0.1).unwrap();
        let w = win(2);
        let law = dop_exact(&m, &w, 2, &min_config(&m, &Site::origin(1), &w).unwrap()).unwrap();
        let total: f64 = law.values().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn capacity_error() {
        let m = ModelSpec::dop(0.7, 0.3, 0.1).unwrap();
        let w = win(20);
        let full = Configuration::from_values(&w, vec![1; w.len()]).unwrap();
        assert!(matches!(dop_exact(&m, &w, 1, &full), Err(Error::Capacity(_))));
        assert!(dop_exact(&ModelSpec::classical_cp(1.0).unwrap(), &w, 1, &full).is_err());
    }

    #[test]
    fn engine_matches_small_instance() {
        let m = ModelSpec::dop(0.7, 0.3, 0.1).unwrap();
        let w = win(1);
        let c = compare_with_engine(&m, &w, 1, &min_config(&m, &Site::origin(1), &w).unwrap(), 20_000, 5).unwrap();
        assert!(c.pass(4.0), "{c:?}");
    }
}
