use super::sigma::main_verdict;
use super::{Check, Setup};
use crate::analysis::{count_tail, fit_tail_from, CountTail, TailFamily, TailFit};
use crate::error::Result;
use crate::essential::{sigma_from, SigmaOptions};
use crate::lattice::Site;
use crate::observables::SurvivalVerdict;

#[derive(Clone, Debug)]
pub struct TailsExperiment {
    /// Start of the exponential fit to `τ` among dying replicas.
    pub sc_t0: f64,
    /// Site whose `K(x)` tail is examined over survivors.
    pub k_site: Option<Site>,
    pub margin: f64,
    pub level: f64,
}

#[derive(Clone, Debug)]
pub struct TailsOutcome {
    pub verdicts: Vec<(usize, u64, SurvivalVerdict)>,
    /// `(replica, K)` over survivors with an uncensored record.
    pub ks: Vec<(usize, usize)>,
    pub sc_fit: Option<TailFit>,
    pub k_tail: Option<CountTail>,
    pub checks: Vec<Check>,
}

/// (SC): exponential tail of `τ` over replicas that die before the horizon;
/// and the tail of `K(x)` over survivors.
pub fn tails(s: &Setup, e: &TailsExperiment) -> Result<TailsOutcome> {
    let opts = SigmaOptions { survival_margin: e.margin };
    let origin = Site::origin(s.dim());
    let rows = s.fan_out(|replica, seed| {
        let log = s.log(seed)?;
        let verdict = main_verdict(s, &log)?;
        let k = match &e.k_site {
            Some(x) if verdict.alive_at(s.t_surv) => {
                let rec = sigma_from(&s.model, &log, &origin, 0.0, x, s.horizon, opts)?;
                (!rec.censored && rec.k >= 1).then_some(rec.k)
            }
            _ => None,
        };
        Ok((replica, seed, verdict, k))
    })?;
    let taus: Vec<f64> = rows.iter().filter_map(|r| r.2.tau()).collect();
    let ks: Vec<(usize, usize)> = rows.iter().filter_map(|r| r.3.map(|k| (r.0, k))).collect();
    let mut checks = Vec::new();

    let sc_fit = match fit_tail_from(&taus, TailFamily::ExpT, e.sc_t0, None) {
        Ok(f) => {
            checks.push(Check::new(
                "SC exponential tail",
                f.accepted(e.level) && f.monotone(),
                format!(
                    "{} dying replicas, {} with tau >= {}: rate {:.4} ± {:.4}, GOF p = {:.4}",
                    f.n_total,
                    f.n_tail,
                    e.sc_t0,
                    f.rate.unwrap_or(f64::NAN),
                    f.rate_se.unwrap_or(f64::NAN),
                    f.gof_p.unwrap_or(f64::NAN)
                ),
            ));
            Some(f)
        }
        Err(err) => {
            checks.push(Check::new("SC exponential tail", false, err.to_string()));
            None
        }
    };

    let k_tail = match &e.k_site {
        None => None,
        Some(x) => {
            let values: Vec<usize> = ks.iter().map(|p| p.1).collect();
            match count_tail(&values) {
                Ok(t) => {
                    let surv: Vec<String> = t.survival.iter().take(6).map(|p| format!("P(K>={})={:.4}", p.0, p.1)).collect();
                    checks.push(Check::new(
                        format!("K({x}) tail decreasing"),
                        t.decreasing_to(3),
                        format!("{} survivors; {}", values.len(), surv.join(", ")),
                    ));
                    let curv = t.curvature.map_or("n/a".to_string(), |(c, se)| format!("{c:.4} ± {se:.4}"));
                    checks.push(Check::new(
                        format!("K({x}) log-survival concave or linear"),
                        t.concave_or_linear(),
                        format!("slope {:.4}, curvature {curv}", t.slope.unwrap_or(f64::NAN)),
                    ));
                    Some(t)
                }
                Err(err) => {
                    checks.push(Check::new(format!("K({x}) tail"), false, err.to_string()));
                    None
                }
            }
        }
    };
    let verdicts = rows.into_iter().map(|r| (r.0, r.1, r.2)).collect();
    Ok(TailsOutcome { verdicts, ks, sc_fit, k_tail, checks })
}
