//! Engine against the model rate tables: the first jump out of `δ_min` has
//! the exponential holding time and the jump distribution the rates give.

use std::collections::BTreeMap;

use shapesim::engine::{check_additivity, replica_seed, run_with, EventLog, RunOptions};
use shapesim::lattice::{Site, Window, OUTSIDE};
use shapesim::models::{min_config, ModelSpec, State};

fn first_jump_law(m: &ModelSpec, w: &Window, init: &[State]) -> BTreeMap<(u32, State), f64> {
    let mut law = BTreeMap::new();
    for i in 0..w.len() {
        let nbrs: Vec<State> =
            w.neighbor_slice(i).iter().filter(|&&j| j != OUTSIDE).map(|&j| init[j as usize]).collect();
        for (to, r) in m.rates(init[i], &nbrs) {
            if r > 0.0 && to != init[i] {
                *law.entry((i as u32, to)).or_insert(0.0) += r;
            }
        }
    }
    law
}

fn check_first_jump(m: ModelSpec, n: usize) {
    let w = Window::new(1, 2).unwrap();
    let init = min_config(&m, &Site::origin(1), &w).unwrap();
    let law = first_jump_law(&m, &w, init.values());
    let total: f64 = law.values().sum();
    let horizon = 8.0 / total;
    let opts = RunOptions { stop_at_extinction: false, record_jumps: true };
    let (mut k, mut exposure) = (0usize, 0.0);
    let mut counts: BTreeMap<(u32, State), usize> = BTreeMap::new();
    for r in 0..n {
        let log = EventLog::new(&m, &w, horizon, replica_seed(77, r as u64)).unwrap();
        let tr = run_with(&m, &log, &init, 0.0, horizon, opts).unwrap();
        match tr.jumps().first() {
            Some(j) => {
                k += 1;
                exposure += j.time;
                *counts.entry((j.site, j.to)).or_insert(0) += 1;
            }
            None => exposure += horizon,
        }
    }
    // censored exponential MLE
    let rate = k as f64 / exposure;
    let se = rate / (k as f64).sqrt();
    assert!((rate - total).abs() < 4.0 * se, "{}: exit rate {rate} ± {se}, table says {total}", m.name());
    for (key, r) in &law {
        let p = r / total;
        let obs = counts.get(key).copied().unwrap_or(0) as f64 / k as f64;
        let se = (p * (1.0 - p) / k as f64).sqrt();
        assert!((obs - p).abs() < 4.0 * se.max(1e-12), "{}: jump {key:?}: {obs} vs {p} ± {se}", m.name());
    }
    let unexpected: Vec<_> = counts.keys().filter(|k| !law.contains_key(k)).collect();
    assert!(unexpected.is_empty(), "{}: jumps with zero rate {unexpected:?}", m.name());
}

#[test]
fn first_jump_matches_rate_table() {
    check_first_jump(ModelSpec::classical_cp(2.0).unwrap(), 20_000);
    check_first_jump(ModelSpec::cpree(2.0, 1.0, 0.2, 1.0, 0.8).unwrap(), 20_000);
    check_first_jump(ModelSpec::cpa(2.0, 1.0, 3, vec![0.5, 1.0, 2.0]).unwrap(), 20_000);
    check_first_jump(ModelSpec::bmcp(1.0, 3.0).unwrap(), 20_000);
}

#[test]
fn additive_models_preserve_joins() {
    let w = Window::new(1, 30).unwrap();
    for m in [
        ModelSpec::classical_cp(2.0).unwrap(),
        ModelSpec::cpree(2.0, 1.0, 0.2, 1.0, 0.8).unwrap(),
        ModelSpec::cpa(2.0, 1.0, 3, vec![]).unwrap(),
        ModelSpec::dop(0.7, 0.3, 0.1).unwrap(),
    ] {
        let r = check_additivity(&m, &w, 20.0, 25, 2, 0.3).unwrap();
        assert!(r.pass(), "{}: {:?}", m.name(), r.violations);
    }
}
