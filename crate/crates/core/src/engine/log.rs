//! The graphical representation: a replayable field of Poisson events
//! (continuous models) or per-step uniforms (discrete models).
//!
//! The window is cut into spatial chunks and time into blocks. Each
//! `(chunk, block)` cell is generated on first use from keyed streams and then
//! frozen, so the log behaves as an immutable object while only paying for
//! the space-time region a run actually visits.

use std::sync::{Arc, OnceLock};

use crate::engine::stream::{exponential, site_key, stream_rng};
use crate::error::{Error, Result};
use crate::lattice::{Site, Window, OUTSIDE};
use crate::models::{ModelSpec, TimeKind};

/// Duration of one generation block for continuous models.
pub const BLOCK_TIME: f64 = 4.0;
/// Steps per generation block for discrete models.
pub const BLOCK_STEPS: u64 = 8;
/// Default cap on the expected number of stored events.
pub const DEFAULT_EVENT_BUDGET: f64 = 1.5e8;

/// One Poisson event. Channels `0..c` are the model's site channels, channels
/// `c..c+2d` the arrows from `site` to its neighbours in lexicographic order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub time: f64,
    pub site: u32,
    pub channel: u8,
    pub mark: u32,
}

#[derive(Debug)]
pub(crate) struct ChunkLayout {
    pub n_chunks: usize,
    pub chunk_of: Vec<u32>,
    pub pos_in_chunk: Vec<u32>,
    pub sites: Vec<Vec<u32>>,
}

impl ChunkLayout {
    fn new(window: &Window) -> Self {
        let d = window.dim();
        let side = window.side();
        let cs = match d {
            1 => 32,
            2 => 8,
            3 => 4,
            _ => 2,
        };
        let per_axis = side.div_ceil(cs);
        let n_chunks = per_axis.pow(d as u32);
        let mut chunk_of = vec![0u32; window.len()];
        let mut pos_in_chunk = vec![0u32; window.len()];
        let mut sites = vec![Vec::new(); n_chunks];
        for (idx, (ch, pos)) in chunk_of.iter_mut().zip(pos_in_chunk.iter_mut()).enumerate() {
            let mut rem = idx;
            let mut c = 0;
            let mut mul = 1;
            for _ in 0..d {
                c += (rem % side) / cs * mul;
                rem /= side;
                mul *= per_axis;
            }
            *ch = c as u32;
            *pos = sites[c].len() as u32;
            sites[c].push(idx as u32);
        }
        ChunkLayout { n_chunks, chunk_of, pos_in_chunk, sites }
    }
}

enum Body {
    Continuous {
        /// Intensity per channel index.
        intensities: Vec<f64>,
        cells: Vec<OnceLock<Box<[Event]>>>,
    },
    Discrete {
        /// Uniforms per site and step: one per out-edge, then self, then immigration.
        slots: usize,
        cells: Vec<OnceLock<Box<[u32]>>>,
    },
}

/// Replayable randomness for one model on one window.
pub struct EventLog {
    model: ModelSpec,
    window: Window,
    seed: u64,
    horizon: f64,
    key_offset: Vec<i32>,
    n_blocks: usize,
    layout: Arc<ChunkLayout>,
    body: Body,
}

impl std::fmt::Debug for EventLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EventLog")
            .field("model", &self.model.name())
            .field("seed", &self.seed)
            .field("dim", &self.window.dim())
            .field("radius", &self.window.radius())
            .field("horizon", &self.horizon)
            .finish()
    }
}

impl EventLog {
    /// Builds a log; cells are generated lazily on first access.
    pub fn new(model: &ModelSpec, window: &Window, horizon: f64, seed: u64) -> Result<Self> {
        Self::with_budget(model, window, horizon, seed, DEFAULT_EVENT_BUDGET)
    }

    pub fn with_budget(
        model: &ModelSpec,
        window: &Window,
        horizon: f64,
        seed: u64,
        max_events: f64,
    ) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidParameter(format!("horizon must be > 0, got {horizon}")));
        }
        let layout = Arc::new(ChunkLayout::new(window));
        let deg = window.degree();
        let n = window.len() as f64;
        let (body, n_blocks, expected) = match model.time_kind() {
            TimeKind::Continuous => {
                let rules = model.rules().expect("continuous model has rules");
                let mut intensities: Vec<f64> = rules.channels.iter().map(|c| c.intensity).collect();
                intensities.extend(std::iter::repeat(rules.edge_intensity).take(deg));
                let n_blocks = ((horizon / BLOCK_TIME).ceil() as usize).max(1);
                let expected = n * intensities.iter().sum::<f64>() * horizon;
                let cells = (0..n_blocks * layout.n_chunks).map(|_| OnceLock::new()).collect();
                (Body::Continuous { intensities, cells }, n_blocks, expected)
            }
            TimeKind::Discrete => {
                if horizon.fract() != 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "discrete horizon must be a whole number of steps, got {horizon}"
                    )));
                }
                let slots = deg + 2;
                let n_blocks = ((horizon as u64).div_ceil(BLOCK_STEPS) as usize).max(1);
                let expected = n * slots as f64 * horizon;
                let cells = (0..n_blocks * layout.n_chunks).map(|_| OnceLock::new()).collect();
                (Body::Discrete { slots, cells }, n_blocks, expected)
            }
        };
        if expected > max_events {
            return Err(Error::Capacity(format!(
                "about {expected:.3e} events for horizon {horizon} on [-{0},{0}]^{1}; budget is {max_events:.3e}",
                window.radius(),
                window.dim()
            )));
        }
        Ok(EventLog {
            model: model.clone(),
            window: window.clone(),
            seed,
            horizon,
            key_offset: vec![0; window.dim()],
            n_blocks,
            layout,
            body,
        })
    }

    /// The same randomness on a longer horizon; the common prefix is identical.
    pub fn extended(&self, horizon: f64) -> Result<Self> {
        let mut log = Self::with_budget(&self.model, &self.window, horizon, self.seed, f64::INFINITY)?;
        log.key_offset = self.key_offset.clone();
        Ok(log)
    }

    /// The log whose events at `s` are this log's events at `s - v`.
    pub fn translated(&self, v: &Site) -> Result<Self> {
        let mut log = Self::with_budget(&self.model, &self.window, self.horizon, self.seed, f64::INFINITY)?;
        log.key_offset = self.key_offset.iter().zip(v.coords()).map(|(a, b)| a + b).collect();
        Ok(log)
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn key_offset(&self) -> &[i32] {
        &self.key_offset
    }

    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    pub(crate) fn layout(&self) -> &ChunkLayout {
        &self.layout
    }

    /// Number of channels per site (continuous) or uniforms per site and step (discrete).
    pub fn channels_per_site(&self) -> usize {
        match &self.body {
            Body::Continuous { intensities, .. } => intensities.len(),
            Body::Discrete { slots, .. } => *slots,
        }
    }

    /// Channel intensities (continuous logs).
    pub fn intensities(&self) -> &[f64] {
        match &self.body {
            Body::Continuous { intensities, .. } => intensities,
            Body::Discrete { .. } => &[],
        }
    }

    /// Number of site channels before the arrow channels.
    pub fn site_channels(&self) -> usize {
        self.channels_per_site() - self.window.degree()
    }

    fn key_of(&self, site: u32) -> u64 {
        let mut c = [0i32; crate::lattice::MAX_DIM];
        let d = self.window.dim();
        self.window.coords_into(site as usize, &mut c[..d]);
        for (ci, o) in c.iter_mut().zip(&self.key_offset) {
            *ci -= o;
        }
        site_key(&c[..d])
    }

    /// Time-sorted events of one continuous cell.
    pub fn cell(&self, block: usize, chunk: usize) -> &[Event] {
        let Body::Continuous { intensities, cells } = &self.body else {
            panic!("cell() on a discrete log");
        };
        cells[block * self.layout.n_chunks + chunk].get_or_init(|| {
            let start = block as f64 * BLOCK_TIME;
            let end = start + BLOCK_TIME;
            let mut out = Vec::new();
            for &site in &self.layout.sites[chunk] {
                let key = self.key_of(site);
                for (c, &rate) in intensities.iter().enumerate() {
                    if rate <= 0.0 {
                        continue;
                    }
                    let mut rng = stream_rng(self.seed, key, c as u32, block as u64);
                    let mut t = start;
                    loop {
                        t += exponential(&mut rng, rate);
                        if t >= end {
                            break;
                        }
                        out.push(Event { time: t, site, channel: c as u8, mark: rand_core::RngCore::next_u32(&mut rng) });
                    }
                }
            }
            out.sort_unstable_by(|a, b| {
                a.time
                    .total_cmp(&b.time)
                    .then(a.site.cmp(&b.site))
                    .then(a.channel.cmp(&b.channel))
            });
            out.into_boxed_slice()
        })
    }

    /// Uniforms of one discrete cell, laid out `[step][site in chunk][slot]`.
    pub fn discrete_cell(&self, block: usize, chunk: usize) -> &[u32] {
        let Body::Discrete { slots, cells } = &self.body else {
            panic!("discrete_cell() on a continuous log");
        };
        let slots = *slots;
        cells[block * self.layout.n_chunks + chunk].get_or_init(|| {
            let sites = &self.layout.sites[chunk];
            let len = sites.len();
            let mut out = vec![0u32; BLOCK_STEPS as usize * len * slots];
            for (p, &site) in sites.iter().enumerate() {
                let mut rng = stream_rng(self.seed, self.key_of(site), 0, block as u64);
                for step in 0..BLOCK_STEPS as usize {
                    for slot in 0..slots {
                        out[(step * len + p) * slots + slot] = rand_core::RngCore::next_u32(&mut rng);
                    }
                }
            }
            out.into_boxed_slice()
        })
    }

    /// Uniform for `site` at step `step` in `slot`.
    #[inline]
    pub fn uniform(&self, step: u64, site: u32, slot: usize) -> u32 {
        let block = (step / BLOCK_STEPS) as usize;
        let chunk = self.layout.chunk_of[site as usize] as usize;
        let cell = self.discrete_cell(block, chunk);
        let len = self.layout.sites[chunk].len();
        let slots = self.channels_per_site();
        let p = self.layout.pos_in_chunk[site as usize] as usize;
        cell[((step % BLOCK_STEPS) as usize * len + p) * slots + slot]
    }

    /// All events of one continuous stream up to the horizon.
    pub fn stream(&self, site: u32, channel: u8) -> Vec<(f64, u32)> {
        let chunk = self.layout.chunk_of[site as usize] as usize;
        (0..self.n_blocks)
            .flat_map(|b| self.cell(b, chunk).iter())
            .filter(|e| e.site == site && e.channel == channel && e.time <= self.horizon)
            .map(|e| (e.time, e.mark))
            .collect()
    }

    /// Events at `site` on its own channels and on every edge touching it,
    /// in `[from, to]`. The atoms of the bad-growth counting measure.
    pub fn events_touching(&self, site: u32, from: f64, to: f64) -> Vec<f64> {
        let w = &self.window;
        let sc = self.site_channels();
        let mut sources: Vec<(u32, Option<u8>)> = vec![(site, None)];
        for k in 0..w.degree() {
            let n = w.neighbor(site as usize, k);
            if n != OUTSIDE {
                // the arrow from the neighbour back to `site` has the opposite direction
                let back = (w.degree() - 1 - k) as u8;
                sources.push((n, Some(sc as u8 + back)));
            }
        }
        let mut out = Vec::new();
        let first = ((from / BLOCK_TIME).floor().max(0.0) as usize).min(self.n_blocks);
        let last = ((to / BLOCK_TIME).floor() as usize + 1).min(self.n_blocks);
        for (src, only) in sources {
            let chunk = self.layout.chunk_of[src as usize] as usize;
            for b in first..last {
                for e in self.cell(b, chunk) {
                    if e.site == src && e.time >= from && e.time <= to && only.is_none_or(|c| c == e.channel) {
                        out.push(e.time);
                    }
                }
            }
        }
        out.sort_by(f64::total_cmp);
        out
    }

    /// Total number of events up to the horizon (forces full generation).
    pub fn total_events(&self) -> usize {
        match &self.body {
            Body::Continuous { .. } => (0..self.n_blocks)
                .flat_map(|b| (0..self.layout.n_chunks).map(move |c| (b, c)))
                .map(|(b, c)| self.cell(b, c).iter().filter(|e| e.time <= self.horizon).count())
                .sum(),
            Body::Discrete { slots, .. } => self.window.len() * slots * self.horizon as usize,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelSpec;

    fn cp_log(seed: u64, horizon: f64) -> EventLog {
        let w = Window::new(1, 40).unwrap();
        EventLog::new(&ModelSpec::classical_cp(2.0).unwrap(), &w, horizon, seed).unwrap()
    }

    #[test]
    fn deterministic_and_extendable() {
        let a = cp_log(11, 10.0);
        let b = cp_log(11, 10.0);
        let long = a.extended(20.0).unwrap();
        for site in [0u32, 17, 40, 80] {
            for ch in 0..3u8 {
                let s = a.stream(site, ch);
                assert_eq!(s, b.stream(site, ch));
                let l = long.stream(site, ch);
                assert_eq!(&l[..s.len()], &s[..]);
                assert!(l[s.len()..].iter().all(|e| e.0 > 10.0));
                assert!(s.windows(2).all(|p| p[0].0 < p[1].0));
            }
        }
        assert_ne!(cp_log(12, 10.0).stream(40, 0), a.stream(40, 0));
    }

    #[test]
    fn window_size_does_not_change_interior_events() {
        let m = ModelSpec::classical_cp(1.0).unwrap();
        let small = EventLog::new(&m, &Window::new(2, 3).unwrap(), 6.0, 5).unwrap();
        let big = EventLog::new(&m, &Window::new(2, 9).unwrap(), 6.0, 5).unwrap();
        let x = Site::new(vec![1, -2]);
        let i = small.window().index(&x).unwrap() as u32;
        let j = big.window().index(&x).unwrap() as u32;
        for ch in 0..5 {
            assert_eq!(small.stream(i, ch), big.stream(j, ch));
        }
    }

    #[test]
    fn translated_log_shifts_streams() {
        let log = cp_log(3, 8.0);
        let v = Site::new(vec![5]);
        let t = log.translated(&v).unwrap();
        let w = log.window();
        let x = Site::new(vec![-3]);
        let i = w.index(&x).unwrap() as u32;
        let j = w.index(&(&x + &v)).unwrap() as u32;
        for ch in 0..3 {
            assert_eq!(log.stream(i, ch), t.stream(j, ch));
        }
    }

    #[test]
    fn capacity_error() {
        let w = Window::new(2, 200).unwrap();
        let m = ModelSpec::classical_cp(2.0).unwrap();
        assert!(matches!(EventLog::new(&m, &w, 1e4, 1), Err(Error::Capacity(_))));
        assert!(EventLog::new(&m, &w, 0.0, 1).is_err());
    }

    #[test]
    fn discrete_uniforms_are_stable() {
        let w = Window::new(1, 5).unwrap();
        let m = ModelSpec::dop(0.5, 0.5, 0.5).unwrap();
        let a = EventLog::new(&m, &w, 20.0, 9).unwrap();
        let b = a.extended(40.0).unwrap();
        for step in 0..20 {
            for site in 0..11 {
                for slot in 0..4 {
                    assert_eq!(a.uniform(step, site, slot), b.uniform(step, site, slot));
                }
            }
        }
        assert!(EventLog::new(&m, &w, 2.5, 9).is_err());
    }

    #[test]
    fn death_channel_counts_are_poisson() {
        // 10^4 site-intervals of length 1 for a rate-1 channel: counts ~ Poisson(1).
        let w = Window::new(1, 99).unwrap();
        let log = EventLog::new(&ModelSpec::classical_cp(1.0).unwrap(), &w, 50.0, 77).unwrap();
        let mut hist = [0usize; 5];
        for site in 0..w.len() as u32 {
            let times = log.stream(site, 0);
            for k in 0..50 {
                let c = times.iter().filter(|(t, _)| *t >= k as f64 && *t < k as f64 + 1.0).count();
                hist[c.min(4)] += 1;
            }
        }
        let n: usize = hist.iter().sum();
        let e = std::f64::consts::E;
        let p = [1.0 / e, 1.0 / e, 0.5 / e, 1.0 / (6.0 * e)];
        let mut probs = p.to_vec();
        probs.push(1.0 - p.iter().sum::<f64>());
        let chi2: f64 = hist
            .iter()
            .zip(&probs)
            .map(|(&o, &p)| {
                let ex = p * n as f64;
                (o as f64 - ex).powi(2) / ex
            })
            .sum();
        // chi-square with 4 dof: 0.999 quantile is 18.47
        assert!(chi2 < 18.47, "chi2 = {chi2}, hist = {hist:?}");
    }
}
