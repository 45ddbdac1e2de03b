//! The sequential coupling of two conditioned colourings.
//!
//! A [`CouplingState`] holds two partial colourings `x`, `y` that start on a
//! single vertex `v` with different colours. [`Coupler::next_vertex`] picks
//! the next vertex to colour, [`Coupler::extend`] colours it in both copies
//! and updates the failed set `V1` and the live edges. The randomized driver
//! [`CouplingSimulator`] samples colours from exact conditional marginals;
//! [`tree`] enumerates every branch instead.

pub mod tree;

use std::collections::HashMap;

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::Zero;
use rand::Rng;
use thiserror::Error;

use crate::instance::{satisfied_by, Colour, Instance, PartialColouring};
use crate::oracle::{rational_to_f64, Oracle, OracleError};

pub use tree::{build_tree, CouplingTree, NodeStatus, TreeStats};

/// Enumeration budget for counting the blank failed vertices at a leaf.
pub const LEAF_BUDGET_BITS: f64 = 48.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CouplingError {
    #[error("vertex {0} is not the designated next vertex")]
    WrongVertex(usize),
    #[error("the coupling has already halted")]
    Halted,
    #[error("the two root colours must differ")]
    SameColours,
    #[error("vertex {0} out of range")]
    VertexOutOfRange(usize),
    #[error("colour {0} out of range")]
    ColourOutOfRange(Colour),
    #[error("parameters violate k2 < k1 <= k_min (k1 = {k1}, k2 = {k2}, k_min = {k_min})")]
    BadParams { k1: usize, k2: usize, k_min: usize },
    #[error("no colouring is consistent with the y side of this leaf")]
    EmptyDenominator,
    #[error("conditional distribution at vertex {0} is empty")]
    EmptySupport(usize),
    #[error("coupling tree exceeds the node budget of {0}")]
    NodeBudget(usize),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CouplingState {
    pub v: usize,
    pub x: PartialColouring,
    pub y: PartialColouring,
    /// Membership in the failed set `V1`; everything else is `V2`.
    pub v1: Vec<bool>,
    /// Liveness per edge of the instance.
    pub live: Vec<bool>,
    pub n_col: usize,
}

impl CouplingState {
    pub fn is_coloured(&self, u: usize) -> bool {
        self.x.is_coloured(u)
    }

    pub fn coloured_vertices(&self) -> Vec<usize> {
        self.x.coloured().map(|(u, _)| u).collect()
    }

    pub fn v1_vertices(&self) -> Vec<usize> {
        (0..self.v1.len()).filter(|&u| self.v1[u]).collect()
    }
}

/// Per-instance context for coupling steps.
#[derive(Debug, Clone)]
pub struct Coupler<'a> {
    inst: &'a Instance,
    inc: Vec<Vec<usize>>,
    k2: usize,
}

impl<'a> Coupler<'a> {
    pub fn new(inst: &'a Instance, k2: usize) -> Self {
        Coupler {
            inst,
            inc: inst.incidence(),
            k2,
        }
    }

    pub fn instance(&self) -> &'a Instance {
        self.inst
    }

    pub fn k2(&self) -> usize {
        self.k2
    }

    /// Root pair: `v` coloured `c1` in `x` and `c2` in `y`. Edges through
    /// `v` that both sides already satisfy are dropped.
    pub fn root(&self, v: usize, c1: Colour, c2: Colour) -> Result<CouplingState, CouplingError> {
        let n = self.inst.n();
        if v >= n {
            return Err(CouplingError::VertexOutOfRange(v));
        }
        for c in [c1, c2] {
            if c >= self.inst.q() {
                return Err(CouplingError::ColourOutOfRange(c));
            }
        }
        if c1 == c2 {
            return Err(CouplingError::SameColours);
        }
        let mut x = PartialColouring::blank(n);
        let mut y = PartialColouring::blank(n);
        x.set(v, c1);
        y.set(v, c2);
        let mut v1 = vec![false; n];
        v1[v] = true;
        let mut s = CouplingState {
            v,
            x,
            y,
            v1,
            live: vec![true; self.inst.num_edges()],
            n_col: 1,
        };
        for &e in &self.inc[v] {
            if self.satisfied_both(&s, e) {
                s.live[e] = false;
            }
        }
        Ok(s)
    }

    fn satisfied_both(&self, s: &CouplingState, e: usize) -> bool {
        let edge = self.inst.edge(e);
        satisfied_by(edge.vertices(), edge.pinned(), &s.x)
            && satisfied_by(edge.vertices(), edge.pinned(), &s.y)
    }

    /// First uncoloured `V2` vertex of the first live edge that meets both
    /// `V1` and the uncoloured part of `V2`; `None` once the coupling halts.
    pub fn next_vertex(&self, s: &CouplingState) -> Option<usize> {
        for (e, edge) in self.inst.edges().iter().enumerate() {
            if !s.live[e] || !edge.vertices().iter().any(|&w| s.v1[w]) {
                continue;
            }
            if let Some(&u) = edge
                .vertices()
                .iter()
                .find(|&&w| !s.v1[w] && !s.is_coloured(w))
            {
                return Some(u);
            }
        }
        None
    }

    pub fn is_halted(&self, s: &CouplingState) -> bool {
        self.next_vertex(s).is_none()
    }

    /// Colours the designated next vertex `u` with `cx` in `x` and `cy` in `y`.
    pub fn extend(
        &self,
        s: &CouplingState,
        u: usize,
        cx: Colour,
        cy: Colour,
    ) -> Result<CouplingState, CouplingError> {
        match self.next_vertex(s) {
            None => return Err(CouplingError::Halted),
            Some(w) if w != u => return Err(CouplingError::WrongVertex(u)),
            _ => {}
        }
        for c in [cx, cy] {
            if c >= self.inst.q() {
                return Err(CouplingError::ColourOutOfRange(c));
            }
        }
        let mut next = s.clone();
        self.extend_in_place(&mut next, u, cx, cy);
        Ok(next)
    }

    pub(crate) fn extend_in_place(&self, s: &mut CouplingState, u: usize, cx: Colour, cy: Colour) {
        s.x.set(u, cx);
        s.y.set(u, cy);
        s.n_col += 1;
        if cx != cy {
            s.v1[u] = true;
        }
        for &e in &self.inc[u] {
            if s.live[e] && self.satisfied_both(s, e) {
                s.live[e] = false;
            }
        }
        for &e in &self.inc[u] {
            if !s.live[e] {
                continue;
            }
            let vs = self.inst.edge(e).vertices();
            let meets_v1 = vs.iter().any(|&w| s.v1[w]);
            let meets_v2 = vs.iter().any(|&w| !s.v1[w]);
            let n_col = vs.iter().filter(|&&w| s.is_coloured(w)).count();
            if meets_v1 && meets_v2 && n_col == self.k2 {
                for &w in vs {
                    if !s.is_coloured(w) {
                        s.v1[w] = true;
                    }
                }
                s.live[e] = false;
            }
        }
    }

    /// Structural invariants that hold at every reachable state.
    pub fn check_invariants(&self, s: &CouplingState) -> Result<(), String> {
        if !s.v1[s.v] {
            return Err("root vertex left V1".into());
        }
        let mut near_v1 = vec![false; self.inst.n()];
        for edge in self.inst.edges() {
            if edge.vertices().iter().any(|&w| s.v1[w]) {
                for &w in edge.vertices() {
                    near_v1[w] = true;
                }
            }
        }
        for u in 0..self.inst.n() {
            near_v1[u] |= s.v1[u];
            if s.is_coloured(u) != s.y.is_coloured(u) {
                return Err(format!("vertex {u} coloured on one side only"));
            }
            if s.is_coloured(u) && !near_v1[u] {
                return Err(format!("coloured vertex {u} is not adjacent to V1"));
            }
            if s.is_coloured(u) && !s.v1[u] && s.x.get(u) != s.y.get(u) {
                return Err(format!("vertex {u} differs but is in V2"));
            }
        }
        if s.n_col != s.x.coloured_count() {
            return Err("coloured count out of sync".into());
        }
        for (e, edge) in self.inst.edges().iter().enumerate() {
            if s.live[e] {
                continue;
            }
            let all_col_or_v1 = edge
                .vertices()
                .iter()
                .all(|&w| s.is_coloured(w) || s.v1[w]);
            if !self.satisfied_both(s, e) && !all_col_or_v1 {
                return Err(format!("edge {e} removed without justification"));
            }
        }
        Ok(())
    }

    /// Edges meeting `V_col` that carry a discrepancy, or that have exactly
    /// `k2` coloured vertices without being satisfied on both sides.
    pub fn blocked_edges(&self, s: &CouplingState) -> Vec<usize> {
        self.inst
            .edges()
            .iter()
            .enumerate()
            .filter(|(e, edge)| {
                let col: Vec<usize> = edge
                    .vertices()
                    .iter()
                    .copied()
                    .filter(|&w| s.is_coloured(w))
                    .collect();
                if col.is_empty() {
                    return false;
                }
                let type1 = col.iter().any(|&w| s.x.get(w) != s.y.get(w));
                let type2 = col.len() == self.k2 && !self.satisfied_both(s, *e);
                type1 || type2
            })
            .map(|(e, _)| e)
            .collect()
    }

    /// Counts `(N_x, N_y)` of assignments to the blank failed vertices that
    /// satisfy every edge contained in `V1 ∪ V_col`, for a halted state.
    pub fn leaf_counts(
        &self,
        s: &CouplingState,
        oracle: &Oracle,
    ) -> Result<(BigUint, BigUint), CouplingError> {
        let keep: Vec<usize> = self
            .inst
            .edges()
            .iter()
            .enumerate()
            .filter(|(_, edge)| {
                edge.vertices()
                    .iter()
                    .all(|&w| s.v1[w] || s.is_coloured(w))
            })
            .map(|(e, _)| e)
            .collect();
        let sub = self.inst.restrict_edges(&keep);
        let outside = (0..self.inst.n())
            .filter(|&w| !s.v1[w] && !s.is_coloured(w))
            .count();
        let scale = BigUint::from(self.inst.q()).pow(outside as u32);
        let nx = oracle.count_with(&sub, &s.x)? / &scale;
        let ny = oracle.count_with(&sub, &s.y)? / &scale;
        Ok((nx, ny))
    }

    /// `|C_x| / |C_y|` at a halted state.
    pub fn leaf_ratio(&self, s: &CouplingState) -> Result<BigRational, CouplingError> {
        if !self.is_halted(s) {
            return Err(CouplingError::WrongVertex(self.next_vertex(s).unwrap_or(s.v)));
        }
        let (nx, ny) = self.leaf_counts(s, &Oracle::with_budget(LEAF_BUDGET_BITS))?;
        if ny.is_zero() {
            return Err(CouplingError::EmptyDenominator);
        }
        Ok(BigRational::new(nx.into(), ny.into()))
    }
}

/// Maximal coupling of two distributions on `0..q`. The diagonal carries
/// `min(px, py)`; leftover mass is matched greedily in increasing colour
/// order on both sides. Returns `(cx, cy, mass)` triples with positive mass.
pub fn maximal_coupling<T>(px: &[T], py: &[T]) -> Vec<(usize, usize, T)>
where
    T: Clone + PartialOrd + Zero + std::ops::Sub<Output = T>,
{
    assert_eq!(px.len(), py.len());
    let mut out = Vec::new();
    let mut rx = Vec::with_capacity(px.len());
    let mut ry = Vec::with_capacity(py.len());
    for (c, (a, b)) in px.iter().zip(py).enumerate() {
        let m = if a < b { a.clone() } else { b.clone() };
        rx.push(a.clone() - m.clone());
        ry.push(b.clone() - m.clone());
        if m > T::zero() {
            out.push((c, c, m));
        }
    }
    let (mut i, mut j) = (0usize, 0usize);
    while i < rx.len() && j < ry.len() {
        if rx[i] <= T::zero() {
            i += 1;
            continue;
        }
        if ry[j] <= T::zero() {
            j += 1;
            continue;
        }
        let m = if rx[i] < ry[j] { rx[i].clone() } else { ry[j].clone() };
        out.push((i, j, m.clone()));
        rx[i] = rx[i].clone() - m.clone();
        ry[j] = ry[j].clone() - m;
    }
    out
}

/// One randomized run of the coupling with colours drawn from exact
/// conditional marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingRun {
    pub state: CouplingState,
    pub trace: Vec<(usize, Colour, Colour)>,
}

/// Randomized coupling driver with a cache of conditional marginals.
#[derive(Debug)]
pub struct CouplingSimulator<'a> {
    coupler: Coupler<'a>,
    oracle: Oracle,
    cache: HashMap<(PartialColouring, usize), Vec<f64>>,
}

impl<'a> CouplingSimulator<'a> {
    pub fn new(inst: &'a Instance, k1: usize, k2: usize, oracle: Oracle) -> Result<Self, CouplingError> {
        check_params(inst, k1, k2)?;
        Ok(CouplingSimulator {
            coupler: Coupler::new(inst, k2),
            oracle,
            cache: HashMap::new(),
        })
    }

    pub fn coupler(&self) -> &Coupler<'a> {
        &self.coupler
    }

    fn conditional(&mut self, x: &PartialColouring, u: usize) -> Result<Vec<f64>, CouplingError> {
        if let Some(p) = self.cache.get(&(x.clone(), u)) {
            return Ok(p.clone());
        }
        let inst = self.coupler.inst;
        let total = self.oracle.count_with(inst, x)?;
        if total.is_zero() {
            return Err(CouplingError::EmptySupport(u));
        }
        let mut xc = x.clone();
        let mut p = Vec::with_capacity(inst.q() as usize);
        for c in 0..inst.q() {
            xc.set(u, c);
            let part = self.oracle.count_with(inst, &xc)?;
            let r = BigRational::new(part.into(), total.clone().into());
            p.push(rational_to_f64(&r));
        }
        self.cache.insert((x.clone(), u), p.clone());
        Ok(p)
    }

    pub fn run<R: Rng + ?Sized>(
        &mut self,
        v: usize,
        c1: Colour,
        c2: Colour,
        rng: &mut R,
    ) -> Result<CouplingRun, CouplingError> {
        let mut s = self.coupler.root(v, c1, c2)?;
        let mut trace = Vec::new();
        while let Some(u) = self.coupler.next_vertex(&s) {
            let px = self.conditional(&s.x, u)?;
            let py = self.conditional(&s.y, u)?;
            let joint = maximal_coupling(&px, &py);
            let mut r: f64 = rng.gen();
            let mut pick = *joint.last().ok_or(CouplingError::EmptySupport(u))?;
            for &(a, b, m) in &joint {
                if r < m {
                    pick = (a, b, m);
                    break;
                }
                r -= m;
            }
            let (cx, cy) = (pick.0 as Colour, pick.1 as Colour);
            self.coupler.extend_in_place(&mut s, u, cx, cy);
            trace.push((u, cx, cy));
        }
        Ok(CouplingRun { state: s, trace })
    }
}

/// Convenience wrapper: one coupling run with a fresh simulator.
#[allow(clippy::too_many_arguments)]
pub fn run_coupling<R: Rng + ?Sized>(
    inst: &Instance,
    v: usize,
    c1: Colour,
    c2: Colour,
    k1: usize,
    k2: usize,
    rng: &mut R,
) -> Result<CouplingRun, CouplingError> {
    CouplingSimulator::new(inst, k1, k2, Oracle::default())?.run(v, c1, c2, rng)
}

pub(crate) fn check_params(inst: &Instance, k1: usize, k2: usize) -> Result<(), CouplingError> {
    let k_min = if inst.num_edges() == 0 {
        usize::MAX
    } else {
        inst.k_min()
    };
    if k2 >= k1 || k1 > k_min {
        return Err(CouplingError::BadParams { k1, k2, k_min });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single() -> Instance {
        Instance::new(3, 2, vec![vec![0, 1, 2]]).unwrap()
    }

    #[test]
    fn next_vertex_rules() {
        let inst = single();
        let c = Coupler::new(&inst, 0);
        let s = c.root(0, 0, 1).unwrap();
        assert_eq!(c.next_vertex(&s), Some(1));

        let two = Instance::new(5, 2, vec![vec![2, 3, 4], vec![0, 1, 2]]).unwrap();
        let c = Coupler::new(&two, 0);
        let s = c.root(2, 0, 1).unwrap();
        assert_eq!(c.next_vertex(&s), Some(3));

        let s = c.extend(&s, 3, 1, 1).unwrap();
        let s = c.extend(&s, 4, 0, 0).unwrap();
        assert!(!s.live[0]);
        assert_eq!(c.next_vertex(&s), Some(0));
    }

    #[test]
    fn extension_rules() {
        let inst = single();
        let c = Coupler::new(&inst, 0);
        let s = c.root(0, 0, 1).unwrap();
        let same = c.extend(&s, 1, 1, 1).unwrap();
        assert!(!same.v1[1]);
        // x = (0,1,_) and y = (1,1,_): satisfied only in x.
        assert!(same.live[0]);
        let diff = c.extend(&s, 1, 0, 1).unwrap();
        assert!(diff.v1[1]);
        assert_eq!(c.extend(&s, 2, 0, 0), Err(CouplingError::WrongVertex(2)));

        let four = Instance::new(4, 3, vec![vec![0, 1, 2, 3]]).unwrap();
        let c = Coupler::new(&four, 2);
        let s = c.root(0, 0, 1).unwrap();
        let s = c.extend(&s, 1, 0, 0).unwrap();
        assert!(!s.live[0]);
        assert!(s.v1[2] && s.v1[3]);
        assert!(c.is_halted(&s));
    }

    #[test]
    fn blocked_sets() {
        let inst = Instance::new(5, 2, vec![vec![0, 1, 2], vec![0, 3, 4], vec![2, 3, 4]]).unwrap();
        let c = Coupler::new(&inst, 0);
        let s = c.root(0, 0, 1).unwrap();
        assert_eq!(c.blocked_edges(&s), vec![0, 1]);
        let single = single();
        let c = Coupler::new(&single, 2);
        let s = c.root(0, 0, 1).unwrap();
        let s = c.extend(&s, 1, 1, 1).unwrap();
        assert!(c.blocked_edges(&s).contains(&0));
    }

    #[test]
    fn maximal_coupling_masses() {
        let j = maximal_coupling(&[0.5, 0.5, 0.0], &[0.2, 0.3, 0.5]);
        let diag: f64 = j.iter().filter(|t| t.0 == t.1).map(|t| t.2).sum();
        assert!((diag - 0.5).abs() < 1e-12);
        let total: f64 = j.iter().map(|t| t.2).sum();
        assert!((total - 1.0).abs() < 1e-12);
        for c in 0..3 {
            let mx: f64 = j.iter().filter(|t| t.0 == c).map(|t| t.2).sum();
            let my: f64 = j.iter().filter(|t| t.1 == c).map(|t| t.2).sum();
            assert!((mx - [0.5, 0.5, 0.0][c]).abs() < 1e-12);
            assert!((my - [0.2, 0.3, 0.5][c]).abs() < 1e-12);
        }
        let r = |a: i64, b: i64| BigRational::new(a.into(), b.into());
        let j = maximal_coupling(&[r(1, 2), r(1, 2)], &[r(1, 3), r(2, 3)]);
        assert_eq!(j, vec![(0, 0, r(1, 3)), (1, 1, r(1, 2)), (0, 1, r(1, 6))]);
    }

    #[test]
    fn leaf_ratio_trivial_cases() {
        let inst = single();
        let c = Coupler::new(&inst, 0);
        let s = c.root(0, 0, 1).unwrap();
        let s = c.extend(&s, 1, 1, 0).unwrap();
        // x = (0,1,_) satisfied; y = (1,0,_) satisfied.
        assert!(c.is_halted(&s));
        assert_eq!(c.leaf_ratio(&s).unwrap(), BigRational::from_integer(1.into()));
    }

    #[test]
    fn runs_are_reproducible() {
        let inst = Instance::new(4, 3, vec![vec![0, 1, 2], vec![1, 2, 3]]).unwrap();
        let mut sim = CouplingSimulator::new(&inst, 1, 0, Oracle::default()).unwrap();
        let a = sim.run(0, 0, 1, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = sim.run(0, 0, 1, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        assert!(sim.coupler().is_halted(&a.state));
        assert_eq!(sim.coupler().check_invariants(&a.state), Ok(()));
    }
}
