//! Finite-window geometry of `Z^d`: sites, nearest neighbours, norms, balls
//! and translations.
//!
//! A [`Window`] is the symmetric box `[-L, L]^d`. Sites inside it get a dense
//! index (first coordinate fastest) which is what the engine works with; the
//! coordinate form [`Site`] is used at API boundaries.

use std::fmt;
use std::ops::{Add, Neg, Sub};
use std::str::FromStr;
use std::sync::Arc;

use bitvec::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported dimension. Stream keys pack one 16-bit coordinate per
/// axis into a `u64`.
pub const MAX_DIM: usize = 4;

/// Sentinel neighbour index for a neighbour outside the window.
pub const OUTSIDE: u32 = u32::MAX;

/// A point of `Z^d`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Site(Vec<i32>);

impl Site {
    pub fn new(coords: impl Into<Vec<i32>>) -> Self {
        let coords = coords.into();
        assert!(!coords.is_empty(), "a site needs at least one coordinate");
        Site(coords)
    }

    pub fn origin(dim: usize) -> Self {
        Site(vec![0; dim])
    }

    /// `n` times the `axis`-th unit vector.
    pub fn axis(dim: usize, axis: usize, n: i32) -> Self {
        let mut c = vec![0; dim];
        c[axis] = n;
        Site(c)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[i32] {
        &self.0
    }

    pub fn is_origin(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    pub fn scale(&self, n: i32) -> Site {
        Site(self.0.iter().map(|c| c * n).collect())
    }

    pub fn norm(&self, kind: NormKind) -> f64 {
        norm(self, kind)
    }
}

impl fmt::Debug for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for Site {
    type Err = Error;

    /// Parses `3`, `(3,-1)` or `3,-1`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().trim_start_matches('(').trim_end_matches(')');
        let coords = t
            .split(',')
            .map(|c| c.trim().parse::<i32>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::Parse(format!("invalid site `{s}`")))?;
        if coords.is_empty() || coords.len() > MAX_DIM {
            return Err(Error::Parse(format!("invalid site `{s}`")));
        }
        Ok(Site(coords))
    }
}

impl Add for &Site {
    type Output = Site;
    fn add(self, rhs: &Site) -> Site {
        assert_eq!(self.dim(), rhs.dim(), "dimension mismatch");
        Site(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &Site {
    type Output = Site;
    fn sub(self, rhs: &Site) -> Site {
        assert_eq!(self.dim(), rhs.dim(), "dimension mismatch");
        Site(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

impl Neg for &Site {
    type Output = Site;
    fn neg(self) -> Site {
        Site(self.0.iter().map(|c| -c).collect())
    }
}

/// Offset of the `k`-th neighbour: lexicographic order of `x ± e_i`, i.e.
/// `-e_0, -e_1, …, -e_{d-1}, +e_{d-1}, …, +e_0`.
pub fn neighbor_offset(dim: usize, k: usize) -> (usize, i32) {
    debug_assert!(k < 2 * dim);
    if k < dim {
        (k, -1)
    } else {
        (2 * dim - 1 - k, 1)
    }
}

/// The `2d` nearest neighbours of `x` in lexicographic order.
pub fn neighbors(x: &Site) -> Vec<Site> {
    let d = x.dim();
    (0..2 * d)
        .map(|k| {
            let (axis, step) = neighbor_offset(d, k);
            let mut c = x.0.clone();
            c[axis] += step;
            Site(c)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NormKind {
    #[default]
    L1,
    L2,
    Linf,
}

impl NormKind {
    pub fn of(self, v: &[f64]) -> f64 {
        match self {
            NormKind::L1 => v.iter().map(|c| c.abs()).sum(),
            NormKind::L2 => v.iter().map(|c| c * c).sum::<f64>().sqrt(),
            NormKind::Linf => v.iter().fold(0.0, |m, c| m.max(c.abs())),
        }
    }
}

impl FromStr for NormKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "l1" => Ok(NormKind::L1),
            "l2" => Ok(NormKind::L2),
            "linf" | "l_inf" | "max" => Ok(NormKind::Linf),
            other => Err(Error::Parse(format!("unknown norm `{other}`"))),
        }
    }
}

pub fn norm(x: &Site, kind: NormKind) -> f64 {
    let v: Vec<f64> = x.0.iter().map(|&c| c as f64).collect();
    kind.of(&v)
}

#[derive(Debug)]
struct WindowGeometry {
    radius: u32,
    dim: usize,
    side: usize,
    len: usize,
    /// `len * 2d` neighbour indices, [`OUTSIDE`] where the neighbour leaves the box.
    neighbors: Vec<u32>,
    boundary: BitVec,
}

/// The box `[-L, L]^d`. Cheap to clone; the neighbour table is shared.
#[derive(Clone, Debug)]
pub struct Window(Arc<WindowGeometry>);

impl PartialEq for Window {
    fn eq(&self, other: &Self) -> bool {
        self.radius() == other.radius() && self.dim() == other.dim()
    }
}

impl Eq for Window {}

impl Window {
    /// Builds the window, rejecting boxes with more than `max_sites` sites.
    pub fn new(dim: usize, radius: u32) -> Result<Self> {
        Self::with_capacity(dim, radius, 1 << 26)
    }

    pub fn with_capacity(dim: usize, radius: u32, max_sites: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidParameter(format!(
                "dimension must be in 1..={MAX_DIM}, got {dim}"
            )));
        }
        if radius > i16::MAX as u32 {
            return Err(Error::Capacity(format!("window radius {radius} too large")));
        }
        let side = 2 * radius as usize + 1;
        let len = side
            .checked_pow(dim as u32)
            .filter(|&n| n <= max_sites)
            .ok_or_else(|| {
                Error::Capacity(format!(
                    "window [-{radius},{radius}]^{dim} exceeds {max_sites} sites"
                ))
            })?;
        let mut neighbors = vec![OUTSIDE; len * 2 * dim];
        let mut boundary = bitvec![0; len];
        let mut coords = vec![0usize; dim];
        for idx in 0..len {
            let mut rem = idx;
            for c in coords.iter_mut() {
                *c = rem % side;
                rem /= side;
            }
            if coords.iter().any(|&c| c == 0 || c == side - 1) {
                boundary.set(idx, true);
            }
            let mut stride = 1;
            let mut strides = [0usize; MAX_DIM];
            for s in strides.iter_mut().take(dim) {
                *s = stride;
                stride *= side;
            }
            for k in 0..2 * dim {
                let (axis, step) = neighbor_offset(dim, k);
                let ok = if step < 0 { coords[axis] > 0 } else { coords[axis] + 1 < side };
                if ok {
                    let n = if step < 0 { idx - strides[axis] } else { idx + strides[axis] };
                    neighbors[idx * 2 * dim + k] = n as u32;
                }
            }
        }
        Ok(Window(Arc::new(WindowGeometry {
            radius,
            dim,
            side,
            len,
            neighbors,
            boundary,
        })))
    }

    pub fn radius(&self) -> u32 {
        self.0.radius
    }

    pub fn dim(&self) -> usize {
        self.0.dim
    }

    pub fn side(&self) -> usize {
        self.0.side
    }

    /// Number of sites.
    pub fn len(&self) -> usize {
        self.0.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn degree(&self) -> usize {
        2 * self.0.dim
    }

    pub fn contains(&self, x: &Site) -> bool {
        x.dim() == self.dim() && x.0.iter().all(|c| c.unsigned_abs() <= self.radius())
    }

    pub fn index(&self, x: &Site) -> Option<usize> {
        if !self.contains(x) {
            return None;
        }
        let l = self.radius() as i64;
        let mut idx = 0usize;
        for &c in x.0.iter().rev() {
            idx = idx * self.side() + (c as i64 + l) as usize;
        }
        Some(idx)
    }

    pub fn site(&self, idx: usize) -> Site {
        let mut c = vec![0i32; self.dim()];
        self.coords_into(idx, &mut c);
        Site(c)
    }

    pub fn coords_into(&self, mut idx: usize, out: &mut [i32]) {
        let l = self.radius() as i32;
        for c in out.iter_mut() {
            *c = (idx % self.side()) as i32 - l;
            idx /= self.side();
        }
    }

    /// `k`-th neighbour of site `idx`, or [`OUTSIDE`].
    #[inline]
    pub fn neighbor(&self, idx: usize, k: usize) -> u32 {
        self.0.neighbors[idx * 2 * self.0.dim + k]
    }

    #[inline]
    pub fn neighbor_slice(&self, idx: usize) -> &[u32] {
        let deg = 2 * self.0.dim;
        &self.0.neighbors[idx * deg..(idx + 1) * deg]
    }

    #[inline]
    pub fn on_boundary(&self, idx: usize) -> bool {
        self.0.boundary[idx]
    }

    pub fn origin_index(&self) -> usize {
        (self.len() - 1) / 2
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.len()).map(|i| self.site(i))
    }
}

/// A set of sites of a window.
#[derive(Clone, PartialEq, Eq)]
pub struct SiteSet {
    window: Window,
    bits: BitVec,
    /// Members lost to the window boundary while building this set.
    dropped: usize,
}

impl fmt::Debug for SiteSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.sites()).finish()
    }
}

impl SiteSet {
    pub fn empty(window: &Window) -> Self {
        SiteSet {
            window: window.clone(),
            bits: bitvec![0; window.len()],
            dropped: 0,
        }
    }

    /// Builds a set from sites; sites outside the window are counted as dropped.
    pub fn from_sites<'a>(window: &Window, sites: impl IntoIterator<Item = &'a Site>) -> Self {
        let mut s = Self::empty(window);
        for x in sites {
            if !s.insert(x) {
                s.dropped += usize::from(!window.contains(x));
            }
        }
        s
    }

    pub fn from_indices(window: &Window, idx: impl IntoIterator<Item = usize>) -> Self {
        let mut s = Self::empty(window);
        for i in idx {
            s.bits.set(i, true);
        }
        s
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn dropped(&self) -> usize {
        self.dropped
    }

    /// Returns `false` if `x` was already present or lies outside the window.
    pub fn insert(&mut self, x: &Site) -> bool {
        match self.window.index(x) {
            Some(i) if !self.bits[i] => {
                self.bits.set(i, true);
                true
            }
            _ => false,
        }
    }

    pub fn insert_index(&mut self, i: usize) {
        self.bits.set(i, true);
    }

    pub fn contains(&self, x: &Site) -> bool {
        self.window.index(x).is_some_and(|i| self.bits[i])
    }

    pub fn contains_index(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn len(&self) -> usize {
        self.bits.count_ones()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.not_any()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter_ones()
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        self.bits.iter_ones().map(|i| self.window.site(i))
    }

    pub fn is_subset(&self, other: &SiteSet) -> bool {
        self.bits.iter_ones().all(|i| other.bits[i])
    }

    pub fn union(&self, other: &SiteSet) -> SiteSet {
        assert_eq!(self.window, other.window, "window mismatch");
        let mut bits = self.bits.clone();
        bits |= other.bits.as_bitslice();
        SiteSet {
            window: self.window.clone(),
            bits,
            dropped: self.dropped + other.dropped,
        }
    }

    /// Shifts every member by `v`; members leaving the window are dropped and counted.
    pub fn translate(&self, v: &Site) -> SiteSet {
        let mut out = SiteSet::empty(&self.window);
        out.dropped = self.dropped;
        for x in self.sites() {
            if !out.insert(&(&x + v)) {
                out.dropped += 1;
            }
        }
        out
    }

    /// Largest norm of a member (0 for the empty set).
    pub fn max_norm(&self, kind: NormKind) -> f64 {
        self.sites().map(|x| norm(&x, kind)).fold(0.0, f64::max)
    }
}

/// All sites within distance `r` of `center`, restricted to `window`.
pub fn ball_in(window: &Window, center: &Site, r: f64, kind: NormKind) -> SiteSet {
    assert!(r >= 0.0, "ball radius must be nonnegative");
    let reach = r.floor() as i32;
    let d = window.dim();
    let mut out = SiteSet::empty(window);
    let mut offset = vec![-reach; d];
    loop {
        let v = Site(offset.clone());
        if norm(&v, kind) <= r + 1e-12 {
            let x = center + &v;
            if !out.insert(&x) && !window.contains(&x) {
                out.dropped += 1;
            }
        }
        let mut axis = 0;
        loop {
            if axis == d {
                return out;
            }
            offset[axis] += 1;
            if offset[axis] <= reach {
                break;
            }
            offset[axis] = -reach;
            axis += 1;
        }
    }
}

/// The ball of radius `r` around the origin, on the smallest window holding it.
pub fn ball(r: f64, kind: NormKind, dim: usize) -> Result<SiteSet> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(Error::InvalidParameter(format!("ball radius {r} must be finite and >= 0")));
    }
    let w = Window::new(dim, r.floor() as u32)?;
    Ok(ball_in(&w, &Site::origin(dim), r, kind))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(c: &[i32]) -> Site {
        Site::new(c.to_vec())
    }

    #[test]
    fn neighbors_are_lexicographic() {
        assert_eq!(
            neighbors(&s(&[0, 0])),
            vec![s(&[-1, 0]), s(&[0, -1]), s(&[0, 1]), s(&[1, 0])]
        );
        assert_eq!(neighbors(&s(&[5])), vec![s(&[4]), s(&[6])]);
        let n3 = neighbors(&s(&[1, 2, 3]));
        assert_eq!(n3.len(), 6);
        let mut sorted = n3.clone();
        sorted.sort();
        assert_eq!(sorted, n3);
        for y in &n3 {
            assert_eq!(norm(&(y - &s(&[1, 2, 3])), NormKind::L1), 1.0);
        }
    }

    #[test]
    fn norms() {
        assert_eq!(norm(&s(&[3, -4]), NormKind::L1), 7.0);
        assert_eq!(norm(&s(&[3, -4]), NormKind::L2), 5.0);
        assert_eq!(norm(&s(&[3, -4]), NormKind::Linf), 4.0);
        for k in [NormKind::L1, NormKind::L2, NormKind::Linf] {
            assert_eq!(norm(&s(&[0, 0]), k), 0.0);
        }
    }

    #[test]
    fn balls() {
        let b = ball(1.0, NormKind::L1, 2).unwrap();
        let mut got: Vec<Site> = b.sites().collect();
        got.sort();
        assert_eq!(
            got,
            vec![s(&[-1, 0]), s(&[0, -1]), s(&[0, 0]), s(&[0, 1]), s(&[1, 0])]
        );
        let b0 = ball(0.0, NormKind::L2, 3).unwrap();
        assert_eq!(b0.sites().collect::<Vec<_>>(), vec![Site::origin(3)]);
        let b2 = ball(2.0, NormKind::Linf, 1).unwrap();
        assert_eq!(b2.sites().collect::<Vec<_>>(), (-2..=2).map(|c| s(&[c])).collect::<Vec<_>>());
        assert!(ball(-1.0, NormKind::L1, 1).is_err());
    }

    #[test]
    fn translation_and_boundary_drops() {
        let w = Window::new(2, 3).unwrap();
        let a = SiteSet::from_sites(&w, [&Site::origin(2)]);
        let b = a.translate(&s(&[2, 0]));
        assert_eq!(b.sites().collect::<Vec<_>>(), vec![s(&[2, 0])]);
        assert_eq!(b.translate(&s(&[-2, 0])), a);
        let edge = SiteSet::from_sites(&w, [&s(&[3, 0])]);
        let gone = edge.translate(&s(&[1, 0]));
        assert!(gone.is_empty());
        assert_eq!(gone.dropped(), 1);
    }

    #[test]
    fn window_indexing_and_neighbor_table() {
        let w = Window::new(2, 2).unwrap();
        assert_eq!(w.len(), 25);
        assert_eq!(w.site(w.origin_index()), Site::origin(2));
        for i in 0..w.len() {
            let x = w.site(i);
            assert_eq!(w.index(&x), Some(i));
            for (k, y) in neighbors(&x).iter().enumerate() {
                let n = w.neighbor(i, k);
                match w.index(y) {
                    Some(j) => assert_eq!(n as usize, j),
                    None => assert_eq!(n, OUTSIDE),
                }
            }
            assert_eq!(w.on_boundary(i), x.coords().iter().any(|c| c.abs() == 2));
        }
        assert!(Window::with_capacity(3, 100, 1000).is_err());
        assert!(Window::new(0, 1).is_err());
    }

    #[test]
    fn site_parsing() {
        assert_eq!("(3,-1)".parse::<Site>().unwrap(), s(&[3, -1]));
        assert_eq!("7".parse::<Site>().unwrap(), s(&[7]));
        assert!("(a,1)".parse::<Site>().is_err());
    }

    fn site3() -> impl Strategy<Value = Site> {
        prop::collection::vec(-50i32..50, 3).prop_map(Site::new)
    }

    proptest! {
        #[test]
        fn norm_axioms(x in site3(), y in site3(), a in -5i32..5) {
            for k in [NormKind::L1, NormKind::L2, NormKind::Linf] {
                prop_assert!(norm(&(&x + &y), k) <= norm(&x, k) + norm(&y, k) + 1e-9);
                let scaled = norm(&x.scale(a), k);
                prop_assert!((scaled - (a.abs() as f64) * norm(&x, k)).abs() < 1e-9);
            }
        }

        #[test]
        fn neighbors_exclude_self(x in site3()) {
            let n = neighbors(&x);
            prop_assert_eq!(n.len(), 6);
            prop_assert!(!n.contains(&x));
        }

        #[test]
        fn translate_injective_inside(v in prop::collection::vec(-3i32..=3, 2), pts in prop::collection::vec(prop::collection::vec(-4i32..=4, 2), 0..20)) {
            let w = Window::new(2, 10).unwrap();
            let sites: Vec<Site> = pts.into_iter().map(Site::new).collect();
            let a = SiteSet::from_sites(&w, sites.iter());
            let v = Site::new(v);
            let b = a.translate(&v);
            prop_assert_eq!(b.dropped(), 0);
            prop_assert_eq!(b.len(), a.len());
            prop_assert_eq!(b.translate(&(-&v)), a);
        }
    }
}
