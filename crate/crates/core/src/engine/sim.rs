//! Lockstep execution of one or more configurations on a shared event log.
//!
//! All lanes read the same events in the same order, which is the coupling
//! behind additivity, restarts and the `θ̃` shift. Events are pulled only
//! from chunks that hold a site able to act (a non-minimal site, or an
//! infected one for BMCP); when nothing there can act, an event has no effect
//! on any lane, so skipping it is exact. Models with background dynamics
//! read every chunk.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::engine::log::{EventLog, BLOCK_TIME};
use crate::error::{Error, Result};
use crate::lattice::OUTSIDE;
use crate::models::{threshold, Dynamics, ModelSpec, State, TimeKind};

/// A recorded state change.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jump {
    pub time: f64,
    pub site: u32,
    pub from: State,
    pub to: State,
}

#[derive(Clone, Debug)]
pub(crate) struct Lane {
    pub state: Vec<State>,
    pub active_per_chunk: Vec<u32>,
    pub prop_count: usize,
    pub hit: Vec<f64>,
    pub jumps: Vec<Jump>,
    pub extinct_at: Option<f64>,
    pub truncated: bool,
}

/// Why [`Sim::advance`] returned.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Advance {
    Reached,
    Stopped,
}

fn is_active_state(model: &ModelSpec, s: State) -> bool {
    match model.dynamics() {
        Dynamics::Bmcp { .. } => s == 2,
        _ => s != 0,
    }
}

pub struct Sim<'a> {
    log: &'a EventLog,
    lanes: Vec<Lane>,
    time: f64,
    record_jumps: bool,
    diff: Option<usize>,
    // scratch
    heap: BinaryHeap<Reverse<(u64, u32)>>,
    cursor: Vec<usize>,
    open: Vec<bool>,
    next: Vec<State>,
}

impl<'a> Sim<'a> {
    /// Starts lanes from the given configurations at time `t0`.
    pub fn new(log: &'a EventLog, inits: &[&[State]], t0: f64, record_jumps: bool) -> Result<Self> {
        let w = log.window();
        let model = log.model();
        if !(0.0..=log.horizon()).contains(&t0) {
            return Err(Error::TimeOutOfRange { t: t0, start: 0.0, end: log.horizon() });
        }
        if model.time_kind() == TimeKind::Discrete && t0.fract() != 0.0 {
            return Err(Error::InvalidParameter(format!("discrete start time {t0} is not a step")));
        }
        let layout = log.layout();
        let lanes = inits
            .iter()
            .map(|init| {
                if init.len() != w.len() {
                    return Err(Error::WindowMismatch(format!(
                        "configuration has {} sites, log window has {}",
                        init.len(),
                        w.len()
                    )));
                }
                if let Some(bad) = init.iter().find(|&&s| s as usize >= model.num_states()) {
                    return Err(Error::InvalidParameter(format!("state {bad} not in the alphabet of {}", model.name())));
                }
                let mut active = vec![0u32; layout.n_chunks];
                let mut hit = vec![f64::INFINITY; w.len()];
                let mut prop = 0;
                let mut truncated = false;
                for (i, &s) in init.iter().enumerate() {
                    if is_active_state(model, s) {
                        active[layout.chunk_of[i] as usize] += 1;
                    }
                    if model.property(s) {
                        prop += 1;
                        hit[i] = t0;
                        truncated |= w.on_boundary(i);
                    }
                }
                Ok(Lane {
                    state: init.to_vec(),
                    active_per_chunk: active,
                    prop_count: prop,
                    hit,
                    jumps: Vec::new(),
                    extinct_at: (prop == 0).then_some(t0),
                    truncated,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Sim {
            log,
            lanes,
            time: t0,
            record_jumps,
            diff: None,
            heap: BinaryHeap::new(),
            cursor: vec![0; layout.n_chunks],
            open: vec![false; layout.n_chunks],
            next: Vec::new(),
        })
    }

    /// Counts sites where lanes 0 and 1 differ, maintained on every jump.
    pub fn track_difference(&mut self) {
        let d = self.lanes[0]
            .state
            .iter()
            .zip(&self.lanes[1].state)
            .filter(|(a, b)| a != b)
            .count();
        self.diff = Some(d);
    }

    pub fn difference(&self) -> Option<usize> {
        self.diff
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn log(&self) -> &'a EventLog {
        self.log
    }

    pub fn lanes(&self) -> usize {
        self.lanes.len()
    }

    pub fn state(&self, lane: usize) -> &[State] {
        &self.lanes[lane].state
    }

    /// Number of sites satisfying the property in `lane`.
    pub fn alive(&self, lane: usize) -> usize {
        self.lanes[lane].prop_count
    }

    pub fn extinct_at(&self, lane: usize) -> Option<f64> {
        self.lanes[lane].extinct_at
    }

    pub fn hit_time(&self, lane: usize, site: usize) -> f64 {
        self.lanes[lane].hit[site]
    }

    pub fn truncated(&self, lane: usize) -> bool {
        self.lanes[lane].truncated
    }

    /// Replaces the configuration of `lane` at the current time. Hit times and
    /// the extinction record of that lane restart from now.
    pub fn reset_lane(&mut self, lane: usize, values: &[State]) -> Result<()> {
        let fresh = Sim::new(self.log, &[values], self.time, self.record_jumps)?;
        let mut l = fresh.lanes.into_iter().next().expect("one lane");
        if !self.record_jumps {
            l.jumps = Vec::new();
        }
        self.lanes[lane] = l;
        if self.diff.is_some() && lane < 2 && self.lanes.len() > 1 {
            self.track_difference();
        }
        Ok(())
    }

    /// Sets `lane` to the minimal configuration plus the seed state at `site`.
    pub fn reset_lane_to_seed(&mut self, lane: usize, site: usize) -> Result<()> {
        let mut v = vec![0; self.log.window().len()];
        v[site] = self.log.model().seed_state();
        self.reset_lane(lane, &v)
    }

    pub(crate) fn into_lanes(self) -> Vec<Lane> {
        self.lanes
    }

    fn set(&mut self, lane: usize, site: usize, to: State, time: f64) -> Option<usize> {
        let model = self.log.model();
        let layout = self.log.layout();
        let l = &mut self.lanes[lane];
        let from = l.state[site];
        debug_assert_ne!(from, to);
        l.state[site] = to;
        let mut newly_active = None;
        let (was, is) = (is_active_state(model, from), is_active_state(model, to));
        if was != is {
            let c = layout.chunk_of[site] as usize;
            if is {
                l.active_per_chunk[c] += 1;
                newly_active = Some(c);
            } else {
                l.active_per_chunk[c] -= 1;
            }
        }
        let (was, is) = (model.property(from), model.property(to));
        if is && !was {
            l.prop_count += 1;
            if l.hit[site].is_infinite() {
                l.hit[site] = time;
            }
            if self.log.window().on_boundary(site) {
                l.truncated = true;
            }
        } else if was && !is {
            l.prop_count -= 1;
            if l.prop_count == 0 && l.extinct_at.is_none() {
                l.extinct_at = Some(time);
            }
        }
        if self.record_jumps {
            l.jumps.push(Jump { time, site: site as u32, from, to });
        }
        if let Some(d) = self.diff.as_mut() {
            if lane < 2 {
                let other = self.lanes[1 - lane].state[site];
                let before = from != other;
                let after = to != other;
                match (before, after) {
                    (true, false) => *d -= 1,
                    (false, true) => *d += 1,
                    _ => {}
                }
            }
        }
        newly_active
    }

    /// Processes events in `(now, t1]`. After every event that changes some
    /// lane, `stop` is consulted; returning `true` halts at that event's time.
    pub fn advance(&mut self, t1: f64, mut stop: impl FnMut(&Sim) -> bool) -> Result<Advance> {
        if t1 > self.log.horizon() + 1e-9 || t1 < self.time {
            return Err(Error::TimeOutOfRange { t: t1, start: self.time, end: self.log.horizon() });
        }
        match self.log.model().time_kind() {
            TimeKind::Continuous => self.advance_continuous(t1, &mut stop),
            TimeKind::Discrete => self.advance_discrete(t1, &mut stop),
        }
    }

    fn any_active(&self, chunk: usize) -> bool {
        self.lanes.iter().any(|l| l.active_per_chunk[chunk] > 0)
    }

    fn open_chunk(&mut self, block: usize, chunk: usize, after: f64) {
        let cell = self.log.cell(block, chunk);
        let pos = cell.partition_point(|e| e.time <= after);
        self.open[chunk] = true;
        self.cursor[chunk] = pos;
        if let Some(e) = cell.get(pos) {
            self.heap.push(Reverse((e.time.to_bits(), chunk as u32)));
        }
    }

    fn advance_continuous(&mut self, t1: f64, stop: &mut dyn FnMut(&Sim) -> bool) -> Result<Advance> {
        let log = self.log;
        let model = log.model();
        let rules = model.rules().expect("continuous model");
        let window = log.window();
        let n_chunks = log.layout().n_chunks;
        let sc = rules.channels.len();
        let background = model.has_background_dynamics();
        let mut block = (self.time / BLOCK_TIME).floor() as usize;
        let mut changed: Vec<(usize, usize, State)> = Vec::with_capacity(4);
        while block < log.n_blocks() && (block as f64) * BLOCK_TIME < t1 {
            self.heap.clear();
            self.open.iter_mut().for_each(|o| *o = false);
            let now = self.time;
            for c in 0..n_chunks {
                if background || self.any_active(c) {
                    self.open_chunk(block, c, now);
                }
            }
            while let Some(Reverse((_, chunk))) = self.heap.pop() {
                let chunk = chunk as usize;
                let cell = log.cell(block, chunk);
                let ev = cell[self.cursor[chunk]];
                if ev.time > t1 {
                    self.time = t1;
                    return Ok(Advance::Reached);
                }
                self.cursor[chunk] += 1;
                if let Some(e) = cell.get(self.cursor[chunk]) {
                    self.heap.push(Reverse((e.time.to_bits(), chunk as u32)));
                }
                let site = ev.site as usize;
                let ch = ev.channel as usize;
                changed.clear();
                if ch < sc {
                    for (li, lane) in self.lanes.iter().enumerate() {
                        let s = lane.state[site];
                        let to = rules.site_rule(ch, s).apply(ev.mark);
                        if to != s {
                            changed.push((li, site, to));
                        }
                    }
                } else {
                    let tgt = window.neighbor(site, ch - sc);
                    if tgt != OUTSIDE {
                        let tgt = tgt as usize;
                        for (li, lane) in self.lanes.iter().enumerate() {
                            let (th, to) = rules.edge_rule(lane.state[site], lane.state[tgt]);
                            if (ev.mark as u64) < th && to != lane.state[tgt] {
                                changed.push((li, tgt, to));
                            }
                        }
                    }
                }
                self.time = ev.time;
                if changed.is_empty() {
                    continue;
                }
                for &(li, s, to) in &changed {
                    if let Some(c) = self.set(li, s, to, ev.time) {
                        if !self.open[c] {
                            self.open_chunk(block, c, ev.time);
                        }
                    }
                }
                if stop(self) {
                    return Ok(Advance::Stopped);
                }
            }
            block += 1;
            self.time = self.time.max((block as f64 * BLOCK_TIME).min(t1));
        }
        self.time = t1;
        Ok(Advance::Reached)
    }

    fn advance_discrete(&mut self, t1: f64, stop: &mut dyn FnMut(&Sim) -> bool) -> Result<Advance> {
        let log = self.log;
        let Dynamics::Dop { p, q, alpha, include_self } = *log.model().dynamics() else {
            unreachable!("only DOP is discrete");
        };
        let (p_th, q_th, a_th) = (threshold(p), threshold(q), threshold(alpha));
        let window = log.window();
        let deg = window.degree();
        let n = window.len();
        let end = t1.floor() as u64;
        let mut step = self.time as u64;
        while step < end {
            for li in 0..self.lanes.len() {
                self.next.clear();
                self.next.resize(n, 0);
                let cur = &self.lanes[li].state;
                for (y, &s) in cur.iter().enumerate() {
                    if s == 0 {
                        continue;
                    }
                    let th = if s == 2 { q_th } else { p_th };
                    for k in 0..deg {
                        let x = window.neighbor(y, k);
                        if x != OUTSIDE && (log.uniform(step, y as u32, k) as u64) < th {
                            let x = x as usize;
                            self.next[x] = self.next[x].max(s);
                        }
                    }
                    if include_self && (log.uniform(step, y as u32, deg) as u64) < th {
                        self.next[y] = self.next[y].max(s);
                    }
                }
                if a_th > 0 {
                    for x in 0..n {
                        if (log.uniform(step, x as u32, deg + 1) as u64) < a_th {
                            self.next[x] = 2;
                        }
                    }
                }
                let next = std::mem::take(&mut self.next);
                for (x, &to) in next.iter().enumerate() {
                    if self.lanes[li].state[x] != to {
                        self.set(li, x, to, (step + 1) as f64);
                    }
                }
                self.next = next;
            }
            step += 1;
            self.time = step as f64;
            if stop(self) {
                return Ok(Advance::Stopped);
            }
        }
        self.time = t1;
        Ok(Advance::Reached)
    }
}
