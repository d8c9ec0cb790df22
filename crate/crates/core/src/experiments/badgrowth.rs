use serde::Serialize;

use super::simulate::run_one;
use super::{Check, Setup};
use crate::analysis::{check_aml, check_all, fit_probability_decay, smallest_clean, GrowthCheck, ProbabilityDecay};
use crate::engine::replica_seed;
use crate::error::{Error, Result};
use crate::essential::{bad_growth_count, BadGrowthParams, BadGrowthReport};
use crate::lattice::{NormKind, Site};
use crate::observables::HitRecord;

#[derive(Clone, Debug)]
pub struct BadGrowthExperiment {
    pub x: Site,
    pub t_grid: Vec<f64>,
    pub l: f64,
    /// Estimated from a pilot run when absent.
    pub m1: Option<f64>,
    pub m2: Option<f64>,
    pub kappa: Option<f64>,
    pub norm: NormKind,
    pub stop_at_first: bool,
    pub pilot_replicas: usize,
    pub level: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GrowthConstants {
    pub m1: f64,
    pub m2: f64,
    pub m1_estimated: bool,
    pub m2_estimated: bool,
    pub aml: Vec<GrowthCheck>,
    pub all: Vec<GrowthCheck>,
}

#[derive(Clone, Debug)]
pub struct BadGrowthOutcome {
    pub constants: GrowthConstants,
    /// `reports[replica][j]` for `t_grid[j]`.
    pub reports: Vec<Vec<BadGrowthReport>>,
    pub decay: ProbabilityDecay,
    pub checks: Vec<Check>,
}

fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    (0..).map(|i| lo + step * i as f64).take_while(|&v| v <= hi + 1e-9).collect()
}

/// Smallest `M1` (AML) and `M2` (ALL) on a 0.25-spaced grid whose
/// exceedance probabilities decay cleanly, from `pilot` runs seeded apart
/// from the main replicas.
pub fn estimate_constants(s: &Setup, pilot: usize, norm: NormKind) -> Result<(f64, f64, Vec<GrowthCheck>, Vec<GrowthCheck>)> {
    let ps = Setup { replicas: pilot, seed: replica_seed(s.seed, u64::MAX), ..s.clone() };
    let runs = ps.fan_out(|i, seed| run_one(&ps, i, seed))?;
    let t_grid: Vec<f64> = [2.0, 4.0, 8.0, 16.0].into_iter().filter(|&t| t <= s.horizon).collect();
    if t_grid.len() < 3 {
        return Err(Error::InvalidParameter("estimating M1/M2 needs a horizon of at least 8".into()));
    }
    let all_records: Vec<HitRecord> = runs.iter().map(|r| r.hits.clone()).collect();
    let aml = check_aml(&all_records, &grid(0.25, 8.0, 0.25), &t_grid, norm)?;
    let survivors: Vec<HitRecord> =
        runs.iter().filter(|r| r.verdict.alive_at(s.t_surv)).map(|r| r.hits.clone()).collect();
    let r = s.window.radius() as i32;
    let sites: Vec<Site> = [5, 10, 20].into_iter().filter(|&n| n < r).map(|n| Site::axis(s.dim(), 0, n)).collect();
    let all = check_all(&survivors, &sites, &grid(0.25, 8.0, 0.25), &t_grid, norm)?;
    let m1 = smallest_clean(&aml)
        .ok_or_else(|| Error::InsufficientData("no M1 <= 8 passes the AML check; set badgrowth.m1".into()))?;
    let m2 = smallest_clean(&all)
        .ok_or_else(|| Error::InsufficientData("no M2 <= 8 passes the ALL check; set badgrowth.m2".into()))?;
    Ok((m1, m2, aml, all))
}

/// `P(N_L(x,t) ≥ 1)` over `t_grid`, and its exponential decay fit.
pub fn bad_growth(s: &Setup, e: &BadGrowthExperiment) -> Result<BadGrowthOutcome> {
    if e.t_grid.len() < 2 {
        return Err(Error::InvalidParameter("badgrowth needs at least two values of t".into()));
    }
    let constants = if let (Some(m1), Some(m2)) = (e.m1, e.m2) {
        GrowthConstants { m1, m2, m1_estimated: false, m2_estimated: false, aml: vec![], all: vec![] }
    } else {
        let (m1, m2, aml, all) = estimate_constants(s, e.pilot_replicas, e.norm)?;
        GrowthConstants {
            m1: e.m1.unwrap_or(m1),
            m2: e.m2.unwrap_or(m2),
            m1_estimated: e.m1.is_none(),
            m2_estimated: e.m2.is_none(),
            aml,
            all,
        }
    };
    let params = BadGrowthParams {
        m1: constants.m1,
        m2: constants.m2,
        kappa: e.kappa,
        norm: e.norm,
        stop_at_first: e.stop_at_first,
    };
    let reports = s.fan_out(|_, seed| {
        let log = s.log(seed)?;
        e.t_grid.iter().map(|&t| bad_growth_count(&s.model, &log, &e.x, t, e.l, params)).collect::<Result<Vec<_>>>()
    })?;
    let k: Vec<usize> = (0..e.t_grid.len()).map(|j| reports.iter().filter(|r| r[j].count >= 1).count()).collect();
    let n = vec![reports.len(); e.t_grid.len()];
    let decay = fit_probability_decay(&e.t_grid, &k, &n)?;
    let shown: Vec<String> = e
        .t_grid
        .iter()
        .zip(&decay.p)
        .zip(decay.lo.iter().zip(&decay.hi))
        .map(|((t, p), (lo, hi))| format!("t={t}: {p:.3} [{lo:.3}, {hi:.3}]"))
        .collect();
    let clauses: Vec<String> = (0..e.t_grid.len())
        .map(|j| {
            let c = reports.iter().fold([0usize; 4], |mut a, r| {
                (0..4).for_each(|i| a[i] += r[j].by_clause[i]);
                a
            });
            format!("t={}: {c:?}", e.t_grid[j])
        })
        .collect();
    let checks = vec![
        Check::new(
            "P(N_L >= 1) strictly decreasing",
            decay.strictly_decreasing(),
            format!(
                "M1 = {}, M2 = {}, kappa = {}; {}; bad points by clause {}",
                constants.m1,
                constants.m2,
                params.kappa(),
                shown.join(", "),
                clauses.join(", ")
            ),
        ),
        Check::new(
            "P(N_L >= 1) exponential fit",
            decay.accepted(e.level),
            match (decay.rate, decay.gof_p) {
                (Some(r), p) => format!("rate {r:.4}, GOF p = {}", p.map_or("n/a".into(), |p| format!("{p:.4}"))),
                (None, _) => "no fit: probabilities at 0 or 1".to_string(),
            },
        ),
    ];
    Ok(BadGrowthOutcome { constants, reports, decay, checks })
}

impl BadGrowthOutcome {
    /// `replica,t,count,clause1..4,censored,evaluated,stopped_early`.
    pub fn counts_csv(&self) -> String {
        let mut s = String::from("replica,t,count,clause1,clause2,clause3,clause4,censored,evaluated,stopped_early\n");
        for (i, reps) in self.reports.iter().enumerate() {
            for r in reps {
                let c = r.by_clause;
                s.push_str(&format!(
                    "{i},{:?},{},{},{},{},{},{},{},{}\n",
                    r.t, r.count, c[0], c[1], c[2], c[3], r.censored, r.evaluated, r.stopped_early
                ));
            }
        }
        s
    }
}
