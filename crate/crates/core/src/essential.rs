//! Essential hitting times `σ(x)`, the shift `θ̃_x`, the subadditivity defect
//! and the bad-growth counter `N_L(x,t)`.
//!
//! The main process and the restart from `(x, u_k)` run as two lanes of one
//! [`Sim`], so they read identical events. When the two lanes coincide the
//! restart has the main process's fate, and in either case `σ = u_k`; the
//! construction stops there without waiting for the horizon.

use std::fmt::Write as _;

use serde::Serialize;

use crate::engine::{EventLog, Sim};
use crate::error::{Error, Result};
use crate::lattice::{ball_in, NormKind, Site};
use crate::models::{ModelSpec, TimeKind};
use crate::observables::{verdict, SurvivalVerdict};

#[derive(Clone, Copy, Debug)]
pub struct SigmaOptions {
    /// A restart still alive at the horizon counts as surviving. If it has
    /// run for less than this long, the record is flagged censored.
    pub survival_margin: f64,
}

impl Default for SigmaOptions {
    fn default() -> Self {
        SigmaOptions { survival_margin: 0.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    /// The restart lane became identical to the main process.
    Coalesced,
    /// The restart was alive at the horizon.
    SurvivedToHorizon,
    /// The main process died, so no further hit exists.
    MainDied,
    /// The main process was alive at the horizon without a further hit.
    NoFurtherHit,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SigmaRecord {
    pub site: Site,
    /// `u_0 ..= u_K`.
    pub u: Vec<f64>,
    /// `v_0 .. v_{K−1}`, followed by `v_K` when it is finite.
    pub v: Vec<f64>,
    pub k: usize,
    /// `u_K`.
    pub sigma: f64,
    /// First hit `t(x) = u_1` (`∞` if never).
    pub t_hit: f64,
    pub censored: bool,
    pub resolution: Resolution,
}

impl SigmaRecord {
    /// Asserts the interleaving `u_0 = v_0 ≤ u_1 ≤ v_1 ≤ …` and `σ ≥ t(x)`.
    pub fn check_invariants(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Format(format!("sigma record for {}: {msg}", self.site)));
        if self.u.is_empty() || self.v.is_empty() || self.u[0] != self.v[0] {
            return bad("u_0 != v_0");
        }
        for i in 1..self.u.len() {
            if self.u[i] < self.v[i - 1] {
                return bad("u_k < v_{k-1}");
            }
            if i < self.v.len() && self.v[i] < self.u[i] {
                return bad("v_k < u_k");
            }
        }
        if self.sigma != self.u[self.k] {
            return bad("sigma != u_K");
        }
        if self.k >= 1 && self.sigma < self.t_hit {
            return bad("sigma < t(x)");
        }
        Ok(())
    }

    pub fn csv_header(dim: usize) -> String {
        let xs: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
        format!("replica,{},K,sigma,t_hit,censored", xs.join(","))
    }

    pub fn csv_row(&self, replica: u64) -> String {
        let mut s = format!("{replica},");
        for c in self.site.coords() {
            let _ = write!(s, "{c},");
        }
        let _ = write!(s, "{},{:?},{:?},{}", self.k, self.sigma, self.t_hit, self.censored);
        s
    }
}

/// `σ(x)` for the process from `δ_min` at the origin at time 0.
pub fn sigma(m: &ModelSpec, log: &EventLog, x: &Site, horizon: f64) -> Result<SigmaRecord> {
    sigma_from(m, log, &Site::origin(x.dim()), 0.0, x, horizon, SigmaOptions::default())
}

/// The σ construction for the process started from `δ_min ∘ T_source` at
/// time `start`, targeting `target`. Times are absolute.
pub fn sigma_from(
    m: &ModelSpec,
    log: &EventLog,
    source: &Site,
    start: f64,
    target: &Site,
    horizon: f64,
    opts: SigmaOptions,
) -> Result<SigmaRecord> {
    if m != log.model() {
        return Err(Error::InvalidParameter("event log belongs to another model".into()));
    }
    if horizon > log.horizon() || start > horizon {
        return Err(Error::TimeOutOfRange { t: horizon, start, end: log.horizon() });
    }
    let w = log.window();
    let src = w
        .index(source)
        .ok_or_else(|| Error::OutsideWindow(format!("source {source} is outside the window")))?;
    let tgt = w
        .index(target)
        .ok_or_else(|| Error::OutsideWindow(format!("target {target} is outside the window")))?;
    let n = w.len();
    let mut init = vec![0; n];
    init[src] = m.seed_state();
    let empty = vec![0; n];
    let mut sim = Sim::new(log, &[&init, &empty], start, false)?;
    let mut u = vec![start];
    let mut v = vec![start];
    let has = |s: &Sim, lane: usize| m.property(s.state(lane)[tgt]);
    let resolution = loop {
        if !has(&sim, 0) {
            sim.advance(horizon, |s| has(s, 0) || s.alive(0) == 0)?;
        }
        if sim.alive(0) == 0 {
            break Resolution::MainDied;
        }
        if !has(&sim, 0) {
            break Resolution::NoFurtherHit;
        }
        u.push(sim.time());
        sim.reset_lane_to_seed(1, tgt)?;
        sim.track_difference();
        if sim.difference() == Some(0) {
            break Resolution::Coalesced;
        }
        sim.advance(horizon, |s| s.alive(1) == 0 || s.difference() == Some(0))?;
        if sim.alive(1) == 0 {
            v.push(sim.time());
        } else if sim.difference() == Some(0) {
            break Resolution::Coalesced;
        } else {
            break Resolution::SurvivedToHorizon;
        }
    };
    let k = u.len() - 1;
    let censored = match resolution {
        Resolution::NoFurtherHit => true,
        Resolution::SurvivedToHorizon => horizon - u[k] < opts.survival_margin,
        _ => false,
    };
    let rec = SigmaRecord {
        site: target.clone(),
        t_hit: u.get(1).copied().unwrap_or(f64::INFINITY),
        sigma: u[k],
        u,
        v,
        k,
        censored,
        resolution,
    };
    debug_assert!(rec.check_invariants().is_ok(), "{rec:?}");
    Ok(rec)
}

/// Survival verdict of the process from `δ_min` at the origin, then `σ` at
/// each target; the per-replica primitive of the σ experiments.
pub fn sigma_set(
    m: &ModelSpec,
    log: &EventLog,
    targets: &[Site],
    horizon: f64,
    opts: SigmaOptions,
) -> Result<(SurvivalVerdict, Vec<SigmaRecord>)> {
    let w = log.window();
    let origin = Site::origin(w.dim());
    let mut init = vec![0; w.len()];
    init[w.index(&origin).expect("origin in window")] = m.seed_state();
    let mut sim = Sim::new(log, &[&init], 0.0, false)?;
    sim.advance(horizon, |s| s.alive(0) == 0)?;
    let verdict = verdict(sim.extinct_at(0), horizon, sim.truncated(0));
    let recs = targets
        .iter()
        .map(|x| sigma_from(m, log, &origin, 0.0, x, horizon, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok((verdict, recs))
}

/// `σ(y) ∘ θ̃_x`, relative to `σ(x)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ShiftedSigma {
    pub sigma_x: SigmaRecord,
    /// The σ construction for the process restarted at `(x, σ(x))` with
    /// target `x + y`; absolute times.
    pub shifted: SigmaRecord,
    /// `σ(y) ∘ θ̃_x`.
    pub value: f64,
    pub censored: bool,
}

pub fn sigma_shifted(m: &ModelSpec, log: &EventLog, x: &Site, y: &Site, horizon: f64) -> Result<ShiftedSigma> {
    sigma_shifted_with(m, log, x, y, horizon, SigmaOptions::default())
}

pub fn sigma_shifted_with(
    m: &ModelSpec,
    log: &EventLog,
    x: &Site,
    y: &Site,
    horizon: f64,
    opts: SigmaOptions,
) -> Result<ShiftedSigma> {
    let origin = Site::origin(x.dim());
    let sx = sigma_from(m, log, &origin, 0.0, x, horizon, opts)?;
    shifted_from(m, log, sx, y, horizon, opts)
}

fn shifted_from(
    m: &ModelSpec,
    log: &EventLog,
    sx: SigmaRecord,
    y: &Site,
    horizon: f64,
    opts: SigmaOptions,
) -> Result<ShiftedSigma> {
    let x = sx.site.clone();
    let target = &x + y;
    let shifted = sigma_from(m, log, &x, sx.sigma, &target, horizon, opts)?;
    let censored = sx.censored || shifted.censored || sx.k == 0;
    Ok(ShiftedSigma { value: shifted.sigma - sx.sigma, censored, sigma_x: sx, shifted })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DefectSample {
    pub x: Site,
    pub y: Site,
    pub sigma_x: f64,
    pub sigma_y_shift: f64,
    pub sigma_xy: f64,
    /// `σ(x+y) − σ(x) − σ(y)∘θ̃_x`; may be negative.
    pub r: f64,
    pub censored: bool,
}

impl DefectSample {
    pub fn csv_header(dim: usize) -> String {
        let xs: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
        let ys: Vec<String> = (1..=dim).map(|i| format!("y{i}")).collect();
        format!("replica,{},{},sigma_x,sigma_y_shift,sigma_xy,r", xs.join(","), ys.join(","))
    }

    pub fn csv_row(&self, replica: u64) -> String {
        let mut s = format!("{replica},");
        for c in self.x.coords().iter().chain(self.y.coords()) {
            let _ = write!(s, "{c},");
        }
        let _ = write!(s, "{:?},{:?},{:?},{:?}", self.sigma_x, self.sigma_y_shift, self.sigma_xy, self.r);
        s
    }
}

pub fn defect(m: &ModelSpec, log: &EventLog, x: &Site, y: &Site, horizon: f64) -> Result<DefectSample> {
    defect_with(m, log, x, y, horizon, SigmaOptions::default())
}

pub fn defect_with(
    m: &ModelSpec,
    log: &EventLog,
    x: &Site,
    y: &Site,
    horizon: f64,
    opts: SigmaOptions,
) -> Result<DefectSample> {
    let origin = Site::origin(x.dim());
    let sxy = sigma_from(m, log, &origin, 0.0, &(x + y), horizon, opts)?;
    let sh = sigma_shifted_with(m, log, x, y, horizon, opts)?;
    Ok(DefectSample {
        x: x.clone(),
        y: y.clone(),
        sigma_x: sh.sigma_x.sigma,
        sigma_y_shift: sh.value,
        sigma_xy: sxy.sigma,
        r: sxy.sigma - sh.sigma_x.sigma - sh.value,
        censored: sh.censored || sxy.censored || sxy.k == 0,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct BadGrowthParams {
    pub m1: f64,
    pub m2: f64,
    /// Defaults to `3·M1·(1+M2)`.
    pub kappa: Option<f64>,
    pub norm: NormKind,
    /// Stop at the first bad point (enough to decide `N_L ≥ 1`).
    pub stop_at_first: bool,
}

impl BadGrowthParams {
    pub fn new(m1: f64, m2: f64) -> Self {
        BadGrowthParams { m1, m2, kappa: None, norm: NormKind::L1, stop_at_first: false }
    }

    pub fn kappa(&self) -> f64 {
        self.kappa.unwrap_or(3.0 * self.m1 * (1.0 + self.m2))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BadGrowthReport {
    pub x: Site,
    pub t: f64,
    pub l: f64,
    pub count: usize,
    /// How many evaluated points satisfied clause 1..4 of `Ẽ^y(x,t)`
    /// (`H_t` escapes the ball, late death, slow return, no `ν_y` atom).
    pub by_clause: [usize; 4],
    /// Evaluations where the horizon cut a survival clause short; each was
    /// counted as bad.
    pub censored: usize,
    pub evaluated: usize,
    pub m1: f64,
    pub m2: f64,
    pub kappa: f64,
    pub stopped_early: bool,
}

/// `N_L(x,t)`: the number of atoms `s ∈ [0, L]` of `ν_y` (plus the atom at
/// 0), over `y ∈ x + B_{M1·t+2}`, at which `Ẽ^y(x,t) ∘ θ_s` holds.
///
/// Survival is judged by being alive at the log horizon.
pub fn bad_growth_count(
    m: &ModelSpec,
    log: &EventLog,
    x: &Site,
    t: f64,
    l: f64,
    params: BadGrowthParams,
) -> Result<BadGrowthReport> {
    if !(t >= 2.0) {
        return Err(Error::InvalidParameter(format!("bad growth needs t >= 2, got {t}")));
    }
    if !(l >= 0.0) || l > log.horizon() {
        return Err(Error::InvalidParameter(format!("L = {l} must lie in [0, horizon]")));
    }
    if m != log.model() {
        return Err(Error::InvalidParameter("event log belongs to another model".into()));
    }
    let w = log.window();
    let xi = w.index(x).ok_or_else(|| Error::OutsideWindow(format!("{x} is outside the window")))?;
    let kappa = params.kappa();
    let horizon = log.horizon();
    let box_sites = ball_in(w, x, params.m1 * t + 2.0, params.norm);
    if box_sites.dropped() > 0 {
        return Err(Error::OutsideWindow(format!(
            "{} sites of x + B_(M1 t + 2) fall outside the window",
            box_sites.dropped()
        )));
    }
    let mut rep = BadGrowthReport {
        x: x.clone(),
        t,
        l,
        count: 0,
        by_clause: [0; 4],
        censored: 0,
        evaluated: 0,
        m1: params.m1,
        m2: params.m2,
        kappa,
        stopped_early: false,
    };
    let discrete = m.time_kind() == TimeKind::Discrete;
    let mut scratch = vec![0; w.len()];
    for y in box_sites.indices() {
        let atoms: Vec<f64> = if discrete {
            (0..=l.floor() as u64).map(|s| s as f64).collect()
        } else {
            let mut a = vec![0.0];
            a.extend(log.events_touching(y as u32, 0.0, l).into_iter().filter(|&s| s > 0.0));
            a
        };
        let ysite = w.site(y);
        let ball_y = ball_in(w, &ysite, params.m1 * t, params.norm);
        for (ai, &s) in atoms.iter().enumerate() {
            rep.evaluated += 1;
            let mut clauses = [false; 4];
            // clause 4: no further atom of ν_y in (s, s + t/2]
            clauses[3] = if discrete {
                false
            } else {
                atoms.get(ai + 1).is_none_or(|&n| n > s + t / 2.0) && {
                    let more = log.events_touching(y as u32, s, s + t / 2.0);
                    !more.iter().any(|&e| e > s)
                }
            };
            scratch.iter_mut().for_each(|v| *v = 0);
            scratch[y] = m.seed_state();
            let mut sim = Sim::new(log, &[&scratch], s, false)?;
            let mut censored = false;
            // clause 1: H_t escapes y + B_{M1 t}
            let t1 = (s + t).min(horizon);
            sim.advance(t1, |sm| sm.alive(0) == 0)?;
            if s + t > horizon {
                censored = true;
            }
            clauses[0] = (0..w.len()).any(|i| sim.hit_time(0, i) <= s + t && !ball_y.contains_index(i));
            // clause 3 needs x alive somewhere in [s+2t, s+κt]
            let mut returned = false;
            let lo = s + 2.0 * t;
            let hi = s + kappa * t;
            if lo <= horizon && sim.alive(0) > 0 {
                sim.advance(lo, |sm| sm.alive(0) == 0)?;
                if sim.alive(0) > 0 {
                    returned = m.property(sim.state(0)[xi]);
                    if !returned && lo < hi {
                        sim.advance(hi.min(horizon), |sm| sm.alive(0) == 0 || m.property(sm.state(0)[xi]))?;
                        returned = sim.alive(0) > 0 && m.property(sim.state(0)[xi]);
                    }
                }
            }
            if sim.alive(0) > 0 && sim.time() < horizon {
                sim.advance(horizon, |sm| sm.alive(0) == 0)?;
            }
            match sim.extinct_at(0) {
                Some(tau) => clauses[1] = tau - s > t / 2.0,
                None => {
                    if !returned {
                        clauses[2] = true;
                        if hi > horizon {
                            censored = true;
                        }
                    }
                }
            }
            if censored {
                rep.censored += 1;
            }
            for (c, &hit) in clauses.iter().enumerate() {
                rep.by_clause[c] += hit as usize;
            }
            if clauses.iter().any(|&c| c) || censored {
                rep.count += 1;
                if params.stop_at_first {
                    rep.stopped_early = true;
                    return Ok(rep);
                }
            }
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{replica_seed, run, EventLog};
    use crate::lattice::Window;
    use crate::models::min_config;

    fn setup(lambda: f64, r: u32, h: f64, seed: u64) -> (ModelSpec, EventLog) {
        let m = ModelSpec::classical_cp(lambda).unwrap();
        let w = Window::new(1, r).unwrap();
        let log = EventLog::new(&m, &w, h, seed).unwrap();
        (m, log)
    }

    #[test]
    fn origin_sigma_is_zero_on_survival() {
        for s in 0..30 {
            let (m, log) = setup(2.5, 60, 60.0, replica_seed(5, s));
            let rec = sigma(&m, &log, &Site::origin(1), 60.0).unwrap();
            rec.check_invariants().unwrap();
            assert_eq!(rec.u[1], 0.0);
            if rec.resolution != Resolution::MainDied {
                assert_eq!((rec.k, rec.sigma), (1, 0.0));
            }
        }
    }

    #[test]
    fn records_are_consistent_with_hit_times() {
        for s in 0..40 {
            let (m, log) = setup(2.0, 60, 50.0, replica_seed(6, s));
            let x = Site::new(vec![5]);
            let rec = sigma(&m, &log, &x, 50.0).unwrap();
            rec.check_invariants().unwrap();
            let w = log.window().clone();
            let tr = run(&m, &log, &min_config(&m, &Site::origin(1), &w).unwrap(), 0.0, 50.0).unwrap();
            let t = tr.first_hits()[w.index(&x).unwrap()];
            assert_eq!(rec.t_hit, t);
            assert!(rec.sigma >= rec.t_hit || rec.k == 0);
            if rec.k == 1 {
                assert_eq!(rec.sigma, t);
            }
            // each finite v_k is the extinction time of the restart at (x, u_k)
            for k in 1..rec.v.len() {
                let rs = crate::engine::restart(&m, &log, &x, rec.u[k]).unwrap();
                assert_eq!(rs.extinct_at(), Some(rec.v[k]));
            }
        }
    }

    #[test]
    fn y_zero_has_zero_defect() {
        for s in 0..20 {
            let (m, log) = setup(2.5, 80, 60.0, replica_seed(7, s));
            let x = Site::new(vec![6]);
            let d = defect(&m, &log, &x, &Site::origin(1), 60.0).unwrap();
            if !d.censored {
                assert_eq!(d.sigma_y_shift, 0.0);
                assert_eq!(d.r, 0.0);
            }
        }
    }

    #[test]
    fn bad_growth_contracts() {
        let (m, log) = setup(2.0, 80, 40.0, 3);
        let x = Site::origin(1);
        assert!(bad_growth_count(&m, &log, &x, 1.0, 5.0, BadGrowthParams::new(1.0, 1.0)).is_err());
        let big = BadGrowthParams::new(100.0, 1.0);
        assert!(matches!(bad_growth_count(&m, &log, &x, 4.0, 5.0, big), Err(Error::OutsideWindow(_))));
        // κt beyond the horizon: surviving points are flagged, not silently good
        let r = bad_growth_count(&m, &log, &x, 4.0, 2.0, BadGrowthParams::new(1.5, 3.0)).unwrap();
        assert!(r.evaluated > 0);
        assert!(r.censored > 0 || r.by_clause[1] > 0);
        assert!(r.count >= r.censored);
    }

    #[test]
    fn instant_death_drives_clause_two_or_four() {
        // very small λ: every restart dies fast; late deaths are rare
        let (m, log) = setup(0.01, 40, 60.0, 11);
        let r = bad_growth_count(&m, &log, &Site::origin(1), 4.0, 5.0, BadGrowthParams::new(1.0, 1.0)).unwrap();
        assert_eq!(r.by_clause[0], 0);
        assert_eq!(r.by_clause[2], 0);
        assert_eq!(r.censored, 0);
        assert!(r.count >= r.by_clause[1].max(r.by_clause[3]));
        assert!(r.count <= r.by_clause[1] + r.by_clause[3]);
    }
}
