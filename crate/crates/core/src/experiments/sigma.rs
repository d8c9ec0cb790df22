use serde::Serialize;

use super::{Check, Setup};
use crate::analysis::mean_se;
use crate::engine::{EventLog, Sim};
use crate::error::{Error, Result};
use crate::essential::{sigma_from, SigmaOptions, SigmaRecord};
use crate::lattice::{norm, NormKind, Site};
use crate::observables::{verdict, SurvivalVerdict};

#[derive(Clone, Debug)]
pub struct SigmaExperiment {
    pub sites: Vec<Site>,
    pub margin: f64,
    /// Require `gap(last) / gap(first) <` this, sites ordered by norm.
    pub max_gap_ratio: Option<f64>,
    pub norm: NormKind,
}

#[derive(Clone, Debug)]
pub struct SigmaReplica {
    pub replica: usize,
    pub seed: u64,
    pub verdict: SurvivalVerdict,
    pub survivor: bool,
    /// Empty for non-survivors.
    pub records: Vec<SigmaRecord>,
}

impl SigmaReplica {
    /// Records usable under survival conditioning: the replica survived, the
    /// record is uncensored and the site was hit.
    pub fn usable(&self) -> impl Iterator<Item = &SigmaRecord> {
        self.records.iter().filter(move |r| self.survivor && !r.censored && r.k >= 1)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SiteSummary {
    pub site: Site,
    pub norm: f64,
    pub usable: usize,
    pub censored: usize,
    pub k_mean: f64,
    pub sigma_mean: f64,
    pub sigma_se: f64,
    pub t_mean: f64,
    /// Mean of `|σ(x) − t(x)| / ‖x‖`.
    pub gap_mean: f64,
    pub gap_se: f64,
}

#[derive(Clone, Debug)]
pub struct SigmaOutcome {
    pub replicas: Vec<SigmaReplica>,
    pub survivors: usize,
    pub summaries: Vec<SiteSummary>,
    pub checks: Vec<Check>,
}

/// Survival verdict of the main process from `δ_min` at the origin.
pub(crate) fn main_verdict(s: &Setup, log: &EventLog) -> Result<SurvivalVerdict> {
    let w = &s.window;
    let mut init = vec![0; w.len()];
    init[w.origin_index()] = s.model.seed_state();
    let mut sim = Sim::new(log, &[&init], 0.0, false)?;
    sim.advance(s.horizon, |x| x.alive(0) == 0)?;
    Ok(verdict(sim.extinct_at(0), s.horizon, sim.truncated(0)))
}

pub fn sigma_experiment(s: &Setup, e: &SigmaExperiment) -> Result<SigmaOutcome> {
    if e.sites.is_empty() {
        return Err(Error::InvalidParameter("sigma needs at least one site".into()));
    }
    let origin = Site::origin(s.dim());
    let opts = SigmaOptions { survival_margin: e.margin };
    let replicas = s.fan_out(|replica, seed| {
        let log = s.log(seed)?;
        let verdict = main_verdict(s, &log)?;
        let survivor = verdict.alive_at(s.t_surv);
        let records = if survivor {
            e.sites.iter().map(|x| sigma_from(&s.model, &log, &origin, 0.0, x, s.horizon, opts)).collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        Ok(SigmaReplica { replica, seed, verdict, survivor, records })
    })?;
    let survivors = replicas.iter().filter(|r| r.survivor).count();

    let summaries: Vec<SiteSummary> = e
        .sites
        .iter()
        .map(|x| {
            let nx = norm(x, e.norm);
            let recs: Vec<&SigmaRecord> = replicas.iter().filter_map(|r| r.usable().find(|rec| rec.site == *x)).collect();
            let censored = replicas.iter().flat_map(|r| &r.records).filter(|rec| rec.site == *x && rec.censored).count();
            let sig: Vec<f64> = recs.iter().map(|r| r.sigma).collect();
            let gaps: Vec<f64> = recs.iter().map(|r| (r.sigma - r.t_hit).abs() / nx.max(1.0)).collect();
            let (sigma_mean, sigma_se) = mean_se(&sig);
            let (gap_mean, gap_se) = mean_se(&gaps);
            SiteSummary {
                site: x.clone(),
                norm: nx,
                usable: recs.len(),
                censored,
                k_mean: recs.iter().map(|r| r.k as f64).sum::<f64>() / recs.len().max(1) as f64,
                sigma_mean,
                sigma_se,
                t_mean: recs.iter().map(|r| r.t_hit).sum::<f64>() / recs.len().max(1) as f64,
                gap_mean,
                gap_se,
            }
        })
        .collect();

    let mut checks = Vec::new();
    let broken: Vec<String> = replicas
        .iter()
        .flat_map(|r| r.records.iter().map(move |rec| (r.replica, rec)))
        .filter(|(_, rec)| rec.check_invariants().is_err() || (rec.k >= 1 && rec.sigma < rec.t_hit))
        .map(|(i, rec)| format!("replica {i} site {}", rec.site))
        .collect();
    checks.push(Check::new(
        "sigma invariants",
        broken.is_empty(),
        if broken.is_empty() { "interleaving and sigma >= t(x) hold on every record".to_string() } else { broken.join("; ") },
    ));
    let mut by_norm: Vec<&SiteSummary> = summaries.iter().collect();
    by_norm.sort_by(|a, b| a.norm.total_cmp(&b.norm));
    if by_norm.len() >= 2 {
        let gaps: Vec<String> = by_norm.iter().map(|s| format!("{}: {:.4}±{:.4}", s.site, s.gap_mean, s.gap_se)).collect();
        let decreasing = by_norm.windows(2).all(|w| w[1].gap_mean < w[0].gap_mean) && by_norm.iter().all(|s| s.usable >= 2);
        checks.push(Check::new("gap decreasing", decreasing, gaps.join(", ")));
        if let Some(ratio) = e.max_gap_ratio {
            let (first, last) = (by_norm[0], by_norm[by_norm.len() - 1]);
            let r = last.gap_mean / first.gap_mean;
            checks.push(Check::new(
                "gap ratio",
                r < ratio,
                format!("gap({}) / gap({}) = {r:.4} (limit {ratio})", last.site, first.site),
            ));
        }
    }
    Ok(SigmaOutcome { replicas, survivors, summaries, checks })
}

impl SigmaOutcome {
    /// `replica,x1..xd,K,sigma,t_hit,censored` over survivors.
    pub fn records_csv(&self, dim: usize) -> String {
        let mut s = SigmaRecord::csv_header(dim) + "\n";
        for r in &self.replicas {
            for rec in &r.records {
                s.push_str(&rec.csv_row(r.replica as u64));
                s.push('\n');
            }
        }
        s
    }
}
