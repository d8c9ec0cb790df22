//! Empirical check of the additive coupling: run `a`, `b` and `a ∨ b` on one
//! log and require `ξ^{a∨b}_t = ξ^a_t ∨ ξ^b_t` after every event.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::Serialize;

use super::{replica_seed, EventLog, Sim};
use crate::error::Result;
use crate::lattice::Window;
use crate::models::{Dynamics, ModelSpec, State};

#[derive(Clone, Debug, Serialize)]
pub struct AdditivityReport {
    pub model: &'static str,
    pub pairs: usize,
    /// Lane-changing events after which the join was compared sitewise.
    pub events_checked: u64,
    /// First violation per failing pair: `pair i, t = …, site …: a ∨ b = … but ξ = …`.
    pub violations: Vec<String>,
}

impl AdditivityReport {
    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

/// Independent sites, each non-minimal with probability `density` and then
/// uniform over the non-minimal states.
pub fn random_config(m: &ModelSpec, window: &Window, density: f64, rng: &mut ChaCha8Rng) -> Vec<State> {
    let k = m.num_states() as u64;
    (0..window.len())
        .map(|_| if uniform(rng) < density { (1 + rng.next_u64() % (k - 1)) as State } else { 0 })
        .collect()
}

/// Two random configurations to be coupled. CPREE's environment and DOP's
/// type-2 field evolve without looking at the infection, so a coupled pair
/// shares them and differs only in the infected (type-1) sites; across
/// different environments the sitewise join is not preserved by either
/// model.
pub fn random_pair(m: &ModelSpec, window: &Window, density: f64, rng: &mut ChaCha8Rng) -> (Vec<State>, Vec<State>) {
    let n = window.len();
    match m.dynamics() {
        Dynamics::Cpree { .. } => {
            let env: Vec<State> = (0..n).map(|_| (rng.next_u64() & 1) as State).collect();
            let mut alive = || -> Vec<State> { env.iter().map(|&e| e | if uniform(rng) < density { 2 } else { 0 }).collect() };
            let a = alive();
            (a, alive())
        }
        Dynamics::Dop { .. } => {
            let hostile: Vec<bool> = (0..n).map(|_| uniform(rng) < density / 2.0).collect();
            let mut fertile = || -> Vec<State> {
                hostile.iter().map(|&h| if h { 2 } else if uniform(rng) < density { 1 } else { 0 }).collect()
            };
            let a = fertile();
            (a, fertile())
        }
        _ => {
            let a = random_config(m, window, density, rng);
            (a, random_config(m, window, density, rng))
        }
    }
}

/// `pairs` random pairs on `window` up to `horizon`; pair `i` uses the log
/// seeded by `replica_seed(seed, i)`.
pub fn check_additivity(
    m: &ModelSpec,
    window: &Window,
    horizon: f64,
    pairs: usize,
    seed: u64,
    density: f64,
) -> Result<AdditivityReport> {
    let mut report = AdditivityReport { model: m.name(), pairs, events_checked: 0, violations: Vec::new() };
    for i in 0..pairs {
        let s = replica_seed(seed, i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(s ^ 0xadd1_71fe);
        let (a, b) = random_pair(m, window, density, &mut rng);
        let ab: Vec<State> = a.iter().zip(&b).map(|(x, y)| *x.max(y)).collect();
        let log = EventLog::new(m, window, horizon, s)?;
        let mut sim = Sim::new(&log, &[&a, &b, &ab], 0.0, false)?;
        let mut bad = None;
        let mut events = 0u64;
        sim.advance(horizon, |sim| {
            events += 1;
            let (x, y, j) = (sim.state(0), sim.state(1), sim.state(2));
            if let Some(site) = (0..j.len()).find(|&k| j[k] != x[k].max(y[k])) {
                bad = Some(format!(
                    "pair {i}, t = {}, site {}: a ∨ b = {} but the joined run has {}",
                    sim.time(),
                    window.site(site),
                    m.label(x[site].max(y[site])),
                    m.label(j[site])
                ));
                return true;
            }
            false
        })?;
        report.events_checked += events;
        report.violations.extend(bad);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn additive_models_pass() {
        let w = Window::new(1, 10).unwrap();
        for m in [
            ModelSpec::classical_cp(2.0).unwrap(),
            ModelSpec::cpree(2.0, 1.0, 0.2, 1.0, 0.8).unwrap(),
            ModelSpec::cpa(2.0, 1.0, 3, vec![]).unwrap(),
            ModelSpec::dop(0.7, 0.3, 0.1).unwrap(),
        ] {
            let r = check_additivity(&m, &w, 5.0, 10, 3, 0.3).unwrap();
            assert!(r.pass(), "{}: {:?}", m.name(), r.violations);
            assert!(r.events_checked > 0);
        }
    }
}
