//! The five nearest-neighbour growth models: alphabets, property of
//! interest, minimal configurations and transition rules.
//!
//! States are small integers listed in the model's total order, so `0` is
//! always `min S` and the sitewise join of two configurations is the
//! sitewise `max`.
//!
//! Continuous-time models are described twice: [`ModelSpec::rates`] gives the
//! jump intensities `c(x, ξ, s)` in closed form, while [`ModelSpec::rules`]
//! compiles the same dynamics into thinning tables for Poisson channels. The
//! engine only uses the tables; tests check the two descriptions agree.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Site, SiteSet, Window};

pub type State = u8;

/// Marks are uniform `u32`; a mark fires a channel when `mark < threshold`.
pub const MARK_SCALE: u64 = 1 << 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeKind {
    Continuous,
    Discrete,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Dynamics {
    /// Classical contact process.
    Contact { lambda: f64 },
    /// Contact process in a randomly evolving environment.
    Cpree { lambda: f64, delta0: f64, delta1: f64, gamma: f64, p: f64 },
    /// Contact process with aging, ages `1..=max_age`.
    Cpa { lambda: f64, gamma: f64, max_age: u8, birth_weights: Vec<f64> },
    /// Dependent oriented percolation with hostile immigration (discrete time).
    Dop { p: f64, q: f64, alpha: f64, include_self: bool },
    /// Boundary modified contact process.
    Bmcp { lambda_e: f64, lambda_i: f64 },
}

/// Site-local Poisson channels of a continuous model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChannelKind {
    Death,
    /// CPREE death of an unfavourable (type 0) particle.
    DeathType0,
    /// CPREE death of a favourable (type 1) particle.
    DeathType1,
    TypeFlip,
    Maturation,
    Recovery,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub kind: ChannelKind,
    pub intensity: f64,
}

/// Effect of one site-channel event on a site in a given state:
/// the new state is `low` if `mark < split`, else `high`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SiteRule {
    pub split: u64,
    pub low: State,
    pub high: State,
}

impl SiteRule {
    const IDLE: fn(State) -> SiteRule = |s| SiteRule { split: MARK_SCALE, low: s, high: s };

    #[inline]
    pub fn apply(&self, mark: u32) -> State {
        if (mark as u64) < self.split {
            self.low
        } else {
            self.high
        }
    }
}

/// Compiled thinning tables for a continuous model.
#[derive(Clone, Debug)]
pub struct Rules {
    pub num_states: usize,
    pub channels: Vec<Channel>,
    /// `site[channel * num_states + state]`.
    pub site: Vec<SiteRule>,
    /// Intensity of the arrow process on every directed edge.
    pub edge_intensity: f64,
    /// `edge[source * num_states + target]`: `(threshold, new target state)`;
    /// threshold 0 means the arrow never acts.
    pub edge: Vec<(u64, State)>,
}

impl Rules {
    #[inline]
    pub fn site_rule(&self, channel: usize, state: State) -> SiteRule {
        self.site[channel * self.num_states + state as usize]
    }

    #[inline]
    pub fn edge_rule(&self, source: State, target: State) -> (u64, State) {
        self.edge[source as usize * self.num_states + target as usize]
    }
}

#[derive(Clone, Debug)]
pub struct ModelSpec {
    dynamics: Dynamics,
    labels: Vec<String>,
    rules: Option<Rules>,
}

impl PartialEq for ModelSpec {
    fn eq(&self, other: &Self) -> bool {
        self.dynamics == other.dynamics
    }
}

pub(crate) fn threshold(prob: f64) -> u64 {
    (prob.clamp(0.0, 1.0) * MARK_SCALE as f64).round() as u64
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg()))
    }
}

fn is_prob(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

impl ModelSpec {
    pub fn classical_cp(lambda: f64) -> Result<Self> {
        check(lambda > 0.0 && lambda.is_finite(), || format!("lambda must be > 0, got {lambda}"))?;
        Ok(Self::build(Dynamics::Contact { lambda }))
    }

    pub fn cpree(lambda: f64, delta0: f64, delta1: f64, gamma: f64, p: f64) -> Result<Self> {
        check(lambda > 0.0 && lambda.is_finite(), || format!("lambda must be > 0, got {lambda}"))?;
        check(0.0 <= delta1 && delta1 < delta0 && delta0.is_finite(), || {
            format!("need 0 <= delta1 < delta0, got delta1={delta1}, delta0={delta0}")
        })?;
        check(gamma >= 0.0 && gamma.is_finite(), || format!("gamma must be >= 0, got {gamma}"))?;
        check(is_prob(p), || format!("p must be in [0,1], got {p}"))?;
        Ok(Self::build(Dynamics::Cpree { lambda, delta0, delta1, gamma, p }))
    }

    /// Aging contact process. `birth_weights[a - 1]` scales the infection
    /// emitted by a particle of age `a`; empty means all ones.
    pub fn cpa(lambda: f64, gamma: f64, max_age: u32, birth_weights: Vec<f64>) -> Result<Self> {
        check(lambda > 0.0 && lambda.is_finite(), || format!("lambda must be > 0, got {lambda}"))?;
        check(gamma >= 0.0 && gamma.is_finite(), || format!("gamma must be >= 0, got {gamma}"))?;
        check((1..=200).contains(&max_age), || format!("max_age must be in 1..=200, got {max_age}"))?;
        let weights = if birth_weights.is_empty() {
            vec![1.0; max_age as usize]
        } else {
            birth_weights
        };
        check(weights.len() == max_age as usize, || {
            format!("expected {max_age} birth weights, got {}", weights.len())
        })?;
        check(weights.iter().all(|w| *w >= 0.0 && w.is_finite()), || {
            "birth weights must be finite and >= 0".into()
        })?;
        check(weights.iter().any(|w| *w > 0.0), || "at least one birth weight must be > 0".into())?;
        Ok(Self::build(Dynamics::Cpa {
            lambda,
            gamma,
            max_age: max_age as u8,
            birth_weights: weights,
        }))
    }

    pub fn dop(p: f64, q: f64, alpha: f64) -> Result<Self> {
        Self::dop_with(p, q, alpha, false)
    }

    /// DOP; `include_self` lets an occupied site also attempt to re-occupy itself.
    pub fn dop_with(p: f64, q: f64, alpha: f64, include_self: bool) -> Result<Self> {
        for (name, v) in [("p", p), ("q", q), ("alpha", alpha)] {
            check(is_prob(v), || format!("{name} must be in [0,1], got {v}"))?;
        }
        Ok(Self::build(Dynamics::Dop { p, q, alpha, include_self }))
    }

    pub fn bmcp(lambda_e: f64, lambda_i: f64) -> Result<Self> {
        check(lambda_e >= 0.0 && lambda_e.is_finite(), || format!("lambda_e must be >= 0, got {lambda_e}"))?;
        check(lambda_i >= 0.0 && lambda_i.is_finite(), || format!("lambda_i must be >= 0, got {lambda_i}"))?;
        Ok(Self::build(Dynamics::Bmcp { lambda_e, lambda_i }))
    }

    /// Config-file parameter names of a model, `None` for an unknown name.
    pub fn param_names(name: &str) -> Option<&'static [&'static str]> {
        Some(match name {
            "classical_cp" | "cp" => &["lambda"],
            "cpree" => &["lambda", "delta0", "delta1", "gamma", "p"],
            "cpa" => &["lambda", "gamma", "max_age", "birth_weights"],
            "dop" => &["p", "q", "alpha", "include_self"],
            "bmcp" => &["lambda_e", "lambda_i"],
            _ => return None,
        })
    }

    /// Builds a model from its name and the config-file parameter names.
    pub fn from_params(name: &str, params: &BTreeMap<String, String>) -> Result<Self> {
        let get = |key: &str, default: Option<f64>| -> Result<f64> {
            match params.get(key) {
                Some(v) => v.trim().parse::<f64>().map_err(|_| {
                    Error::InvalidParameter(format!("model.{key}: `{v}` is not a number"))
                }),
                None => default.ok_or_else(|| Error::InvalidParameter(format!("missing model.{key}"))),
            }
        };
        let known = Self::param_names(name)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown model `{name}`")))?;
        if let Some(bad) = params.keys().find(|k| !known.contains(&k.as_str())) {
            return Err(Error::InvalidParameter(format!("model `{name}` has no parameter `{bad}`")));
        }
        match name {
            "classical_cp" | "cp" => Self::classical_cp(get("lambda", None)?),
            "cpree" => Self::cpree(
                get("lambda", Some(1.0))?,
                get("delta0", None)?,
                get("delta1", None)?,
                get("gamma", None)?,
                get("p", None)?,
            ),
            "cpa" => {
                let n = get("max_age", None)?;
                if n.fract() != 0.0 || n < 1.0 {
                    return Err(Error::InvalidParameter(format!("max_age must be a positive integer, got {n}")));
                }
                let weights = match params.get("birth_weights") {
                    Some(w) => w
                        .split([',', ';'])
                        .map(|v| v.trim().parse::<f64>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| Error::InvalidParameter(format!("model.birth_weights: `{w}`")))?,
                    None => Vec::new(),
                };
                Self::cpa(get("lambda", None)?, get("gamma", Some(1.0))?, n as u32, weights)
            }
            "dop" => {
                let include_self = match params.get("include_self").map(|s| s.trim()) {
                    None | Some("false") => false,
                    Some("true") => true,
                    Some(v) => {
                        return Err(Error::InvalidParameter(format!("model.include_self: `{v}` is not a bool")))
                    }
                };
                Self::dop_with(get("p", None)?, get("q", None)?, get("alpha", None)?, include_self)
            }
            _ => Self::bmcp(get("lambda_e", None)?, get("lambda_i", None)?),
        }
    }

    fn build(dynamics: Dynamics) -> Self {
        let labels = match &dynamics {
            Dynamics::Contact { .. } => vec!["0".into(), "1".into()],
            Dynamics::Cpree { .. } => ["(0,0)", "(1,0)", "(0,1)", "(1,1)"].map(String::from).to_vec(),
            Dynamics::Cpa { max_age, .. } => (0..=*max_age).map(|a| a.to_string()).collect(),
            Dynamics::Dop { .. } => vec!["0".into(), "1".into(), "2".into()],
            Dynamics::Bmcp { .. } => vec!["-1".into(), "0".into(), "1".into()],
        };
        let mut m = ModelSpec { dynamics, labels, rules: None };
        if m.time_kind() == TimeKind::Continuous {
            m.rules = Some(m.compile());
        }
        m
    }

    pub fn dynamics(&self) -> &Dynamics {
        &self.dynamics
    }

    pub fn name(&self) -> &'static str {
        match self.dynamics {
            Dynamics::Contact { .. } => "classical_cp",
            Dynamics::Cpree { .. } => "cpree",
            Dynamics::Cpa { .. } => "cpa",
            Dynamics::Dop { .. } => "dop",
            Dynamics::Bmcp { .. } => "bmcp",
        }
    }

    pub fn time_kind(&self) -> TimeKind {
        match self.dynamics {
            Dynamics::Dop { .. } => TimeKind::Discrete,
            _ => TimeKind::Continuous,
        }
    }

    pub fn num_states(&self) -> usize {
        self.labels.len()
    }

    /// Human-readable label of a state, e.g. `(0,1)` for CPREE.
    pub fn label(&self, s: State) -> &str {
        &self.labels[s as usize]
    }

    /// The indicator `g` of the property of interest.
    #[inline]
    pub fn property(&self, s: State) -> bool {
        match self.dynamics {
            Dynamics::Contact { .. } | Dynamics::Cpa { .. } => s >= 1,
            Dynamics::Cpree { .. } => s >= 2,
            Dynamics::Dop { .. } => s == 1,
            Dynamics::Bmcp { .. } => s == 2,
        }
    }

    /// State placed at the seed site of `δ_min`; every other site holds `min S`.
    pub fn seed_state(&self) -> State {
        match self.dynamics {
            Dynamics::Cpree { .. } | Dynamics::Bmcp { .. } => 2,
            _ => 1,
        }
    }

    /// Whether the additive coupling is guaranteed (BMCP is exempt).
    pub fn is_additive(&self) -> bool {
        !matches!(self.dynamics, Dynamics::Bmcp { .. })
    }

    /// Whether sites in `min S` can change without a neighbouring non-minimal
    /// site (environment flips, immigration).
    pub fn has_background_dynamics(&self) -> bool {
        match self.dynamics {
            Dynamics::Cpree { gamma, p, .. } => gamma > 0.0 && p > 0.0,
            Dynamics::Dop { alpha, .. } => alpha > 0.0,
            _ => false,
        }
    }

    /// Thinning tables (continuous models only).
    pub fn rules(&self) -> Option<&Rules> {
        self.rules.as_ref()
    }

    /// Jump intensities `c(x, ξ, s)` out of `state` given the neighbour states,
    /// as `(target, rate)` pairs with positive rate. Continuous models only.
    pub fn rates(&self, state: State, neighbors: &[State]) -> Vec<(State, f64)> {
        let count = |pred: &dyn Fn(State) -> bool| neighbors.iter().filter(|&&s| pred(s)).count() as f64;
        let mut out: Vec<(State, f64)> = Vec::new();
        match &self.dynamics {
            Dynamics::Contact { lambda } => {
                if state == 1 {
                    out.push((0, 1.0));
                } else {
                    out.push((1, lambda * count(&|s| s == 1)));
                }
            }
            Dynamics::Cpree { lambda, delta0, delta1, gamma, p } => {
                let ty = state & 1;
                let alive = state >> 1;
                let alive_nbrs = count(&|s| s >= 2);
                if alive == 0 {
                    out.push((state | 2, lambda * alive_nbrs));
                } else {
                    out.push((state & 1, if ty == 0 { *delta0 } else { *delta1 }));
                }
                if ty == 0 {
                    out.push((state | 1, gamma * p));
                } else {
                    out.push((state & 2, gamma * (1.0 - p)));
                }
            }
            Dynamics::Cpa { lambda, gamma, max_age, birth_weights } => {
                if state == 0 {
                    let w: f64 = neighbors
                        .iter()
                        .filter(|&&s| s >= 1)
                        .map(|&s| birth_weights[s as usize - 1])
                        .sum();
                    out.push((1, lambda * w));
                } else {
                    out.push((0, 1.0));
                    if state < *max_age {
                        out.push((state + 1, *gamma));
                    }
                }
            }
            Dynamics::Bmcp { lambda_e, lambda_i } => {
                let infected = count(&|s| s == 2);
                match state {
                    0 => out.push((2, lambda_e * infected)),
                    1 => out.push((2, lambda_i * infected)),
                    _ => out.push((1, 1.0)),
                }
            }
            Dynamics::Dop { .. } => {}
        }
        out.retain(|&(s, r)| r > 0.0 && s != state);
        out
    }

    /// Upper bound on the total jump intensity out of any local configuration.
    pub fn max_outflow(&self, dim: usize) -> f64 {
        let deg = 2.0 * dim as f64;
        match &self.dynamics {
            Dynamics::Contact { lambda } => (lambda * deg).max(1.0),
            Dynamics::Cpree { lambda, delta0, gamma, .. } => (lambda * deg).max(*delta0) + gamma,
            Dynamics::Cpa { lambda, gamma, birth_weights, .. } => {
                let wmax = birth_weights.iter().cloned().fold(0.0, f64::max);
                (lambda * wmax * deg).max(1.0 + gamma)
            }
            Dynamics::Bmcp { lambda_e, lambda_i } => (lambda_e.max(*lambda_i) * deg).max(1.0),
            Dynamics::Dop { .. } => 0.0,
        }
    }

    fn compile(&self) -> Rules {
        let ns = self.num_states();
        let idle = SiteRule::IDLE;
        let always = |to: State| SiteRule { split: MARK_SCALE, low: to, high: to };
        let mut channels = Vec::new();
        let mut site = Vec::new();
        let mut edge = vec![(0u64, 0 as State); ns * ns];
        for (i, e) in edge.iter_mut().enumerate() {
            e.1 = (i % ns) as State;
        }
        let edge_intensity;
        match &self.dynamics {
            Dynamics::Contact { lambda } => {
                channels.push(Channel { kind: ChannelKind::Death, intensity: 1.0 });
                site.extend([idle(0), always(0)]);
                edge_intensity = *lambda;
                edge[ns] = (MARK_SCALE, 1);
            }
            Dynamics::Cpree { lambda, delta0, delta1, gamma, p } => {
                channels.push(Channel { kind: ChannelKind::DeathType0, intensity: *delta0 });
                site.extend([idle(0), idle(1), always(0), idle(3)]);
                channels.push(Channel { kind: ChannelKind::DeathType1, intensity: *delta1 });
                site.extend([idle(0), idle(1), idle(2), always(1)]);
                // A flip event redraws the type: favourable with probability p.
                channels.push(Channel { kind: ChannelKind::TypeFlip, intensity: *gamma });
                let split = threshold(*p);
                site.extend((0..4u8).map(|s| SiteRule { split, low: s | 1, high: s & 2 }));
                edge_intensity = *lambda;
                for src in 2..4 {
                    for tgt in 0..2u8 {
                        edge[src * ns + tgt as usize] = (MARK_SCALE, tgt | 2);
                    }
                }
            }
            Dynamics::Cpa { lambda, gamma, max_age, birth_weights } => {
                let n = *max_age;
                channels.push(Channel { kind: ChannelKind::Death, intensity: 1.0 });
                site.push(idle(0));
                site.extend((1..=n).map(|_| always(0)));
                channels.push(Channel { kind: ChannelKind::Maturation, intensity: *gamma });
                site.extend((0..=n).map(|a| if a >= 1 && a < n { always(a + 1) } else { idle(a) }));
                let wmax = birth_weights.iter().cloned().fold(0.0, f64::max);
                edge_intensity = lambda * wmax;
                for age in 1..=n as usize {
                    edge[age * ns] = (threshold(birth_weights[age - 1] / wmax), 1);
                }
            }
            Dynamics::Bmcp { lambda_e, lambda_i } => {
                channels.push(Channel { kind: ChannelKind::Recovery, intensity: 1.0 });
                site.extend([idle(0), idle(1), always(1)]);
                let lmax = lambda_e.max(*lambda_i);
                edge_intensity = lmax;
                if lmax > 0.0 {
                    edge[2 * ns] = (threshold(lambda_e / lmax), 2);
                    edge[2 * ns + 1] = (threshold(lambda_i / lmax), 2);
                }
            }
            Dynamics::Dop { .. } => unreachable!("discrete model has no channels"),
        }
        Rules { num_states: ns, channels, site, edge_intensity, edge }
    }
}

/// A configuration on a window: a dense array of states, `min S` by default.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Configuration {
    window: Window,
    values: Vec<State>,
}

impl Configuration {
    pub fn minimal(window: &Window) -> Self {
        Configuration { window: window.clone(), values: vec![0; window.len()] }
    }

    pub fn from_values(window: &Window, values: Vec<State>) -> Result<Self> {
        if values.len() != window.len() {
            return Err(Error::WindowMismatch(format!(
                "{} values for a window of {} sites",
                values.len(),
                window.len()
            )));
        }
        Ok(Configuration { window: window.clone(), values })
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn values(&self) -> &[State] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [State] {
        &mut self.values
    }

    pub fn get(&self, x: &Site) -> Option<State> {
        self.window.index(x).map(|i| self.values[i])
    }

    pub fn set(&mut self, x: &Site, s: State) -> Result<()> {
        let i = self
            .window
            .index(x)
            .ok_or_else(|| Error::OutsideWindow(x.to_string()))?;
        self.values[i] = s;
        Ok(())
    }

    pub fn is_minimal(&self) -> bool {
        self.values.iter().all(|&s| s == 0)
    }

    /// Sitewise `≤` in the model's total order.
    pub fn le(&self, other: &Configuration) -> bool {
        self.window == other.window && self.values.iter().zip(&other.values).all(|(a, b)| a <= b)
    }

    pub fn translate(&self, v: &Site) -> Configuration {
        let mut out = Configuration::minimal(&self.window);
        for (i, &s) in self.values.iter().enumerate() {
            if s != 0 {
                let y = &self.window.site(i) + v;
                if let Some(j) = self.window.index(&y) {
                    out.values[j] = s;
                }
            }
        }
        out
    }
}

/// `δ_min ∘ T_x`: the seed state at `x`, `min S` elsewhere.
pub fn min_config(m: &ModelSpec, x: &Site, w: &Window) -> Result<Configuration> {
    let mut c = Configuration::minimal(w);
    c.set(x, m.seed_state())?;
    Ok(c)
}

/// Sites whose state satisfies the property of interest.
pub fn property_set(m: &ModelSpec, c: &Configuration) -> SiteSet {
    SiteSet::from_indices(
        c.window(),
        c.values.iter().enumerate().filter(|(_, &s)| m.property(s)).map(|(i, _)| i),
    )
}

/// Sitewise maximum.
pub fn join(a: &Configuration, b: &Configuration) -> Result<Configuration> {
    if a.window != b.window {
        return Err(Error::WindowMismatch("join of configurations on different windows".into()));
    }
    Ok(Configuration {
        window: a.window.clone(),
        values: a.values.iter().zip(&b.values).map(|(x, y)| *x.max(y)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn all_models() -> Vec<ModelSpec> {
        vec![
            ModelSpec::classical_cp(1.5).unwrap(),
            ModelSpec::cpree(2.0, 2.0, 0.5, 4.0, 0.25).unwrap(),
            ModelSpec::cpa(2.0, 1.0, 3, vec![0.5, 1.0, 2.0]).unwrap(),
            ModelSpec::bmcp(0.5, 2.0).unwrap(),
        ]
    }

    fn rate_to(m: &ModelSpec, s: State, nbrs: &[State], to: State) -> f64 {
        m.rates(s, nbrs).iter().filter(|(t, _)| *t == to).map(|(_, r)| r).sum()
    }

    #[test]
    fn classical_cp_rates() {
        let m = ModelSpec::classical_cp(1.5).unwrap();
        assert!((rate_to(&m, 0, &[1, 1, 1, 0], 1) - 4.5).abs() < 1e-12);
        assert_eq!(rate_to(&m, 1, &[0, 1, 0, 1], 0), 1.0);
        assert!(m.rates(0, &[0, 0]).is_empty());
        assert!(ModelSpec::classical_cp(0.0).is_err());
        assert!(ModelSpec::classical_cp(-1.0).is_err());
    }

    #[test]
    fn cpree_rates() {
        let m = ModelSpec::cpree(1.0, 2.0, 0.5, 4.0, 0.25).unwrap();
        // (0,1) is index 2, (0,0) index 0, (1,0) index 1.
        assert_eq!(m.label(2), "(0,1)");
        assert_eq!(rate_to(&m, 2, &[0, 0], 0), 2.0);
        assert_eq!(rate_to(&m, 1, &[0, 0], 0), 3.0);
        assert_eq!(rate_to(&m, 0, &[0, 0], 1), 1.0);
        let frozen = ModelSpec::cpree(1.0, 2.0, 0.5, 0.0, 0.25).unwrap();
        for s in 0..4 {
            assert!(frozen.rates(s, &[3, 2]).iter().all(|(t, _)| (t & 1) == (s & 1)));
        }
        assert!(ModelSpec::cpree(1.0, 0.5, 0.5, 1.0, 0.5).is_err());
        assert!(ModelSpec::cpree(1.0, 1.0, 0.5, -1.0, 0.5).is_err());
        assert!(ModelSpec::cpree(1.0, 1.0, 0.5, 1.0, 1.5).is_err());
    }

    #[test]
    fn cpa_rates() {
        let m = ModelSpec::cpa(2.0, 1.5, 3, vec![]).unwrap();
        assert_eq!(rate_to(&m, 2, &[0, 3], 0), 1.0);
        assert_eq!(rate_to(&m, 1, &[0, 0], 2), 1.5);
        assert!(m.rates(3, &[0, 0]).iter().all(|(t, _)| *t == 0));
        assert_eq!(rate_to(&m, 0, &[1, 3], 1), 4.0);
        assert!(ModelSpec::cpa(1.0, 1.0, 0, vec![]).is_err());
        assert!(ModelSpec::cpa(1.0, 1.0, 2, vec![1.0]).is_err());
        // N = 1 is the classical contact process on the alive/dead projection.
        let one = ModelSpec::cpa(1.7, 1.0, 1, vec![1.0]).unwrap();
        let cp = ModelSpec::classical_cp(1.7).unwrap();
        for s in 0..2 {
            for nbrs in [[0, 0], [0, 1], [1, 1]] {
                assert_eq!(one.rates(s, &nbrs), cp.rates(s, &nbrs));
            }
        }
    }

    #[test]
    fn bmcp_rates() {
        let m = ModelSpec::bmcp(0.5, 2.0).unwrap();
        assert_eq!(rate_to(&m, 0, &[2, 2], 2), 1.0);
        assert_eq!(rate_to(&m, 2, &[0, 0], 1), 1.0);
        assert_eq!(rate_to(&m, 1, &[2, 0], 2), 2.0);
        assert!(ModelSpec::bmcp(-0.1, 1.0).is_err());
        // Equal infection rates: the infected indicator is a contact process.
        let flat = ModelSpec::bmcp(1.3, 1.3).unwrap();
        let cp = ModelSpec::classical_cp(1.3).unwrap();
        for s in 0..3u8 {
            for nbrs in [[0u8, 1], [2, 1], [2, 2]] {
                let cp_n: Vec<State> = nbrs.iter().map(|&v| u8::from(v == 2)).collect();
                let inf = rate_to(&flat, s, &nbrs, 2);
                let cp_rate = rate_to(&cp, u8::from(s == 2), &cp_n, 1);
                assert!((inf - cp_rate).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dop_validation() {
        assert!(ModelSpec::dop(0.7, 0.3, 0.1).is_ok());
        assert!(ModelSpec::dop(1.0, 0.5, 0.0).is_ok());
        assert!(ModelSpec::dop(1.2, 0.5, 0.0).is_err());
        assert!(ModelSpec::dop(0.5, -0.1, 0.0).is_err());
        assert_eq!(ModelSpec::dop(0.5, 0.5, 0.5).unwrap().time_kind(), TimeKind::Discrete);
    }

    #[test]
    fn from_params_names() {
        let mut p = BTreeMap::new();
        p.insert("lambda".to_string(), "2".to_string());
        assert_eq!(ModelSpec::from_params("classical_cp", &p).unwrap(), ModelSpec::classical_cp(2.0).unwrap());
        p.insert("delta0".to_string(), "1".to_string());
        assert!(ModelSpec::from_params("classical_cp", &p).is_err());
        let mut q = BTreeMap::new();
        for (k, v) in [("p", "0.8"), ("q", "0.2"), ("alpha", "0.02"), ("include_self", "true")] {
            q.insert(k.to_string(), v.to_string());
        }
        assert_eq!(
            ModelSpec::from_params("dop", &q).unwrap(),
            ModelSpec::dop_with(0.8, 0.2, 0.02, true).unwrap()
        );
        assert!(ModelSpec::from_params("ising", &q).is_err());
    }

    /// Every local neighbourhood for a model on `Z^dim`.
    fn neighborhoods(ns: usize, deg: usize) -> Vec<Vec<State>> {
        let mut out = vec![vec![]];
        for _ in 0..deg {
            out = out
                .into_iter()
                .flat_map(|v| (0..ns as State).map(move |s| [v.clone(), vec![s]].concat()))
                .collect();
        }
        out
    }

    #[test]
    fn rates_are_finite_nonnegative_and_bounded() {
        for m in all_models() {
            for dim in 1..=2 {
                let bound = m.max_outflow(dim);
                for s in 0..m.num_states() as State {
                    for nb in neighborhoods(m.num_states(), 2 * dim) {
                        let r = m.rates(s, &nb);
                        assert!(r.iter().all(|(t, v)| *t != s && v.is_finite() && *v > 0.0));
                        let total: f64 = r.iter().map(|(_, v)| v).sum();
                        assert!(total <= bound + 1e-12, "{} outflow {total} > {bound}", m.name());
                    }
                }
            }
        }
    }

    #[test]
    fn rates_depend_only_on_neighbor_multiset() {
        for m in all_models() {
            for s in 0..m.num_states() as State {
                for nb in neighborhoods(m.num_states(), 4) {
                    let mut rev = nb.clone();
                    rev.reverse();
                    assert_eq!(m.rates(s, &nb), m.rates(s, &rev));
                }
            }
        }
    }

    #[test]
    fn min_config_property_set_is_seed() {
        let w = Window::new(2, 3).unwrap();
        let x = Site::new(vec![2, 0]);
        for m in all_models().into_iter().chain([ModelSpec::dop(0.7, 0.3, 0.1).unwrap()]) {
            let c = min_config(&m, &x, &w).unwrap();
            let a = property_set(&m, &c);
            assert_eq!(a.sites().collect::<Vec<_>>(), vec![x.clone()]);
        }
        let cpree = ModelSpec::cpree(1.0, 1.0, 0.2, 1.0, 0.8).unwrap();
        let c = min_config(&cpree, &x, &w).unwrap();
        assert_eq!(cpree.label(c.get(&x).unwrap()), "(0,1)");
        assert_eq!(c.values().iter().filter(|&&s| s != 0).count(), 1);
        assert!(min_config(&cpree, &Site::new(vec![4, 0]), &w).is_err());
    }

    #[test]
    fn property_sets() {
        let w = Window::new(1, 2).unwrap();
        let cp = ModelSpec::classical_cp(1.0).unwrap();
        assert!(property_set(&cp, &Configuration::minimal(&w)).is_empty());
        let cpree = ModelSpec::cpree(1.0, 1.0, 0.2, 1.0, 0.8).unwrap();
        // (1,1) at -1 and (1,0) at 1.
        let c = Configuration::from_values(&w, vec![0, 3, 0, 1, 0]).unwrap();
        assert_eq!(property_set(&cpree, &c).sites().collect::<Vec<_>>(), vec![Site::new(vec![-1])]);
        let dop = ModelSpec::dop(0.5, 0.5, 0.5).unwrap();
        let c = Configuration::from_values(&w, vec![0, 2, 0, 1, 0]).unwrap();
        assert_eq!(property_set(&dop, &c).sites().collect::<Vec<_>>(), vec![Site::new(vec![1])]);
    }

    fn config(ns: u8) -> impl Strategy<Value = Vec<State>> {
        prop::collection::vec(0..ns, 9)
    }

    proptest! {
        #[test]
        fn join_is_a_semilattice(a in config(4), b in config(4), c in config(4)) {
            let w = Window::new(2, 1).unwrap();
            let a = Configuration::from_values(&w, a).unwrap();
            let b = Configuration::from_values(&w, b).unwrap();
            let c = Configuration::from_values(&w, c).unwrap();
            prop_assert_eq!(join(&a, &a).unwrap(), a.clone());
            prop_assert_eq!(join(&a, &Configuration::minimal(&w)).unwrap(), a.clone());
            prop_assert_eq!(join(&a, &b).unwrap(), join(&b, &a).unwrap());
            prop_assert_eq!(
                join(&join(&a, &b).unwrap(), &c).unwrap(),
                join(&a, &join(&b, &c).unwrap()).unwrap()
            );
        }
    }

    #[test]
    fn join_rejects_mismatched_windows() {
        let a = Configuration::minimal(&Window::new(1, 2).unwrap());
        let b = Configuration::minimal(&Window::new(1, 3).unwrap());
        assert!(join(&a, &b).is_err());
    }

    #[test]
    fn thinning_tables_reproduce_rates() {
        // Expected intensity of each jump from the compiled tables, computed as
        // channel intensity × firing probability, must equal the closed form.
        for m in all_models() {
            let r = m.rules().unwrap();
            for s in 0..m.num_states() as State {
                for nb in neighborhoods(m.num_states(), 2) {
                    let mut table: BTreeMap<State, f64> = BTreeMap::new();
                    for (c, ch) in r.channels.iter().enumerate() {
                        let rule = r.site_rule(c, s);
                        let p_low = rule.split as f64 / MARK_SCALE as f64;
                        *table.entry(rule.low).or_default() += ch.intensity * p_low;
                        *table.entry(rule.high).or_default() += ch.intensity * (1.0 - p_low);
                    }
                    for &src in &nb {
                        let (th, to) = r.edge_rule(src, s);
                        *table.entry(to).or_default() += r.edge_intensity * th as f64 / MARK_SCALE as f64;
                    }
                    table.remove(&s);
                    table.retain(|_, v| *v > 0.0);
                    let closed: BTreeMap<State, f64> = m.rates(s, &nb).into_iter().collect();
                    assert_eq!(table.keys().collect::<Vec<_>>(), closed.keys().collect::<Vec<_>>(), "{}", m.name());
                    for (k, v) in &closed {
                        assert!((table[k] - v).abs() < 1e-6, "{} {s}->{k}", m.name());
                    }
                }
            }
        }
    }
}
