use std::fmt::Write as _;

use crate::engine::log::EventLog;
use crate::engine::sim::{Jump, Sim};
use crate::error::{Error, Result};
use crate::lattice::{Site, Window};
use crate::models::{min_config, Configuration, ModelSpec, State};

#[derive(Clone, Copy, Debug)]
pub struct RunOptions {
    /// Stop simulating once no site satisfies the property. The property set
    /// is absorbing at `∅`, so observables of `A_t` stay exact; the full
    /// configuration is no longer advanced after that time.
    pub stop_at_extinction: bool,
    pub record_jumps: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { stop_at_extinction: false, record_jumps: true }
    }
}

/// The evolution of one configuration on an event log.
#[derive(Clone, Debug)]
pub struct Trajectory {
    model: ModelSpec,
    window: Window,
    seed: u64,
    initial: Configuration,
    start: f64,
    end: f64,
    simulated_until: f64,
    jumps: Vec<Jump>,
    hit: Vec<f64>,
    extinct_at: Option<f64>,
    truncated: bool,
    final_state: Vec<State>,
}

impl Trajectory {
    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    /// Time up to which the full configuration was advanced.
    pub fn simulated_until(&self) -> f64 {
        self.simulated_until
    }

    pub fn initial(&self) -> &Configuration {
        &self.initial
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    /// First time each site satisfied the property (`∞` if never).
    pub fn first_hits(&self) -> &[f64] {
        &self.hit
    }

    /// First time the property set was empty, if that happened by `end`.
    pub fn extinct_at(&self) -> Option<f64> {
        self.extinct_at
    }

    /// Whether a site on the window boundary ever satisfied the property.
    pub fn truncated(&self) -> bool {
        self.truncated
    }

    pub fn final_state(&self) -> &[State] {
        &self.final_state
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if t < self.start || t > self.end {
            return Err(Error::TimeOutOfRange { t, start: self.start, end: self.end });
        }
        Ok(())
    }

    /// Configuration at time `t` (right-continuous).
    pub fn config_at(&self, t: f64) -> Result<Configuration> {
        self.check_time(t)?;
        if t > self.simulated_until {
            return Err(Error::TimeOutOfRange { t, start: self.start, end: self.simulated_until });
        }
        let mut c = self.initial.clone();
        let v = c.values_mut();
        for j in self.jumps.iter().take_while(|j| j.time <= t) {
            v[j.site as usize] = j.to;
        }
        Ok(c)
    }

    /// Whether `site` satisfies the property at time `t`.
    pub fn has_property_at(&self, site: usize, t: f64) -> Result<bool> {
        self.check_time(t)?;
        if self.extinct_at.is_some_and(|e| t >= e) {
            return Ok(false);
        }
        let mut s = self.initial.values()[site];
        for j in self.jumps.iter().take_while(|j| j.time <= t) {
            if j.site as usize == site {
                s = j.to;
            }
        }
        Ok(self.model.property(s))
    }

    /// Maximal intervals `[enter, leave)` during which `site` satisfied the
    /// property; `leave = ∞` if it still did at the end of the record.
    pub fn presence(&self, site: usize) -> Vec<(f64, f64)> {
        let m = &self.model;
        let mut out = Vec::new();
        let mut inside = m.property(self.initial.values()[site]).then_some(self.start);
        for j in self.jumps.iter().filter(|j| j.site as usize == site) {
            match (inside, m.property(j.to)) {
                (None, true) => inside = Some(j.time),
                (Some(t), false) => {
                    out.push((t, j.time));
                    inside = None;
                }
                _ => {}
            }
        }
        if let Some(t) = inside {
            out.push((t, f64::INFINITY));
        }
        out
    }

    /// Line-oriented text dump, byte-identical for identical runs.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# model={} seed={} start={:?} end={:?} truncated={}",
            self.model.name(),
            self.seed,
            self.start,
            self.end,
            self.truncated
        );
        let nonmin: Vec<String> = self
            .initial
            .values()
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0)
            .map(|(i, v)| format!("{}={}", self.window.site(i), v))
            .collect();
        let _ = writeln!(s, "# initial {}", nonmin.join(" "));
        for j in &self.jumps {
            let _ = writeln!(s, "{:?},{},{},{}", j.time, self.window.site(j.site as usize), j.from, j.to);
        }
        s
    }
}

fn check_log(m: &ModelSpec, log: &EventLog, t0: f64, t1: f64) -> Result<()> {
    if m != log.model() {
        return Err(Error::InvalidParameter(format!(
            "event log was built for {}, not {}",
            log.model().name(),
            m.name()
        )));
    }
    if !(t0 <= t1) || t0 < 0.0 || t1 > log.horizon() {
        return Err(Error::TimeOutOfRange { t: t1, start: t0, end: log.horizon() });
    }
    Ok(())
}

pub fn run(m: &ModelSpec, log: &EventLog, init: &Configuration, t0: f64, t1: f64) -> Result<Trajectory> {
    run_with(m, log, init, t0, t1, RunOptions::default())
}

pub fn run_with(
    m: &ModelSpec,
    log: &EventLog,
    init: &Configuration,
    t0: f64,
    t1: f64,
    opts: RunOptions,
) -> Result<Trajectory> {
    Ok(run_many(m, log, &[init], t0, t1, opts)?.pop().expect("one lane"))
}

/// Runs several initial configurations on the same events.
pub fn run_coupled(m: &ModelSpec, log: &EventLog, inits: &[Configuration], t0: f64, t1: f64) -> Result<Vec<Trajectory>> {
    let refs: Vec<&Configuration> = inits.iter().collect();
    run_many(m, log, &refs, t0, t1, RunOptions::default())
}

fn run_many(
    m: &ModelSpec,
    log: &EventLog,
    inits: &[&Configuration],
    t0: f64,
    t1: f64,
    opts: RunOptions,
) -> Result<Vec<Trajectory>> {
    check_log(m, log, t0, t1)?;
    for c in inits {
        if c.window() != log.window() {
            return Err(Error::WindowMismatch("initial configuration is not on the log's window".into()));
        }
    }
    let slices: Vec<&[State]> = inits.iter().map(|c| c.values()).collect();
    let mut sim = Sim::new(log, &slices, t0, opts.record_jumps)?;
    let n = inits.len();
    sim.advance(t1, |s| opts.stop_at_extinction && (0..n).all(|l| s.alive(l) == 0))?;
    let until = sim.time();
    let lanes = sim.into_lanes();
    Ok(lanes
        .into_iter()
        .zip(inits)
        .map(|(lane, init)| Trajectory {
            model: m.clone(),
            window: log.window().clone(),
            seed: log.seed(),
            initial: (*init).clone(),
            start: t0,
            end: t1,
            simulated_until: until,
            jumps: lane.jumps,
            hit: lane.hit,
            extinct_at: lane.extinct_at,
            truncated: lane.truncated,
            final_state: lane.state,
        })
        .collect())
}

/// The process started at time `t0` from `δ_min ∘ T_x`, run to the horizon.
pub fn restart(m: &ModelSpec, log: &EventLog, x: &Site, t0: f64) -> Result<Trajectory> {
    restart_with(m, log, x, t0, RunOptions::default())
}

pub fn restart_with(m: &ModelSpec, log: &EventLog, x: &Site, t0: f64, opts: RunOptions) -> Result<Trajectory> {
    let init = min_config(m, x, log.window())?;
    run_with(m, log, &init, t0, log.horizon(), opts)
}
