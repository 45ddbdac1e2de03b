//! Linear constraints over a coupling tree, feasibility, ratio bracketing
//! and the marginal estimator built on top of them.
//!
//! Every tree node `i` owns two variables: the x-side mass `2i` and the
//! y-side mass `2i + 1`, both boxed to `[0, 1]`.

use std::time::Instant;

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rayon::prelude::*;
use thiserror::Error;

use crate::coupling::tree::{CouplingTree, NodeStatus, TreeConfig};
use crate::coupling::{maximal_coupling, Coupler, CouplingError};
use crate::instance::{Colour, Instance, PartialColouring};
use crate::lll::marginal_bounds;
use crate::oracle::{Oracle, OracleError};
use crate::params::AlgoParams;

/// Default additive slack per constraint.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Default half-width (as a factor) of the fallback ratio bracket.
pub const DEFAULT_DELTA: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("no halted leaf lies below the depth cap, so the ratio is unconstrained")]
    Vacuous,
    #[error("initial bracket [{lo}, {hi}] is infeasible")]
    InitialInfeasible { lo: f64, hi: f64 },
    #[error("both halves of [{lo}, {hi}] are infeasible")]
    BothHalvesInfeasible { lo: f64, hi: f64 },
    #[error("numerical failure in the LP solver: {0}")]
    Numerical(String),
    #[error("invalid input: {0}")]
    BadInput(String),
    #[error(transparent)]
    Coupling(#[from] CouplingError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Leaf ratio brackets.
    Ratio,
    /// Root masses and row/column sums.
    Mass,
    /// Off-diagonal caps.
    Cap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub family: Family,
    pub terms: Vec<(usize, BigRational)>,
    pub relation: Relation,
    pub rhs: BigRational,
}

impl LinearConstraint {
    fn lhs_f64(&self, point: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(v, c)| rat_f64(c) * point[*v])
            .sum()
    }

    fn lhs_exact(&self, point: &[BigRational]) -> BigRational {
        self.terms
            .iter()
            .fold(BigRational::zero(), |acc, (v, c)| acc + c * &point[*v])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSystem {
    pub num_vars: usize,
    pub constraints: Vec<LinearConstraint>,
    /// True when no leaf ratio constraint exists.
    pub vacuous: bool,
    pub r_lo: BigRational,
    pub r_hi: BigRational,
}

pub fn var_x(node: usize) -> usize {
    2 * node
}

pub fn var_y(node: usize) -> usize {
    2 * node + 1
}

impl LpSystem {
    pub fn count(&self, family: Family) -> usize {
        self.constraints.iter().filter(|c| c.family == family).count()
    }

    /// Largest violation of any constraint or box at `point`.
    pub fn max_violation(&self, point: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for &p in point {
            worst = worst.max(-p).max(p - 1.0);
        }
        for c in &self.constraints {
            let d = c.lhs_f64(point) - rat_f64(&c.rhs);
            let v = match c.relation {
                Relation::Le => d,
                Relation::Ge => -d,
                Relation::Eq => d.abs(),
            };
            worst = worst.max(v);
        }
        worst
    }

    /// Exact check of every constraint and box.
    pub fn satisfied_exact(&self, point: &[BigRational]) -> bool {
        self.satisfied_exact_in(point, &[Family::Ratio, Family::Mass, Family::Cap])
    }

    /// Exact check of the boxes and of the constraints in `families`.
    pub fn satisfied_exact_in(&self, point: &[BigRational], families: &[Family]) -> bool {
        let one = BigRational::one();
        if point.iter().any(|p| p.is_negative() || p > &one) {
            return false;
        }
        self.constraints.iter().filter(|c| families.contains(&c.family)).all(|c| {
            let lhs = c.lhs_exact(point);
            match c.relation {
                Relation::Le => lhs <= c.rhs,
                Relation::Ge => lhs >= c.rhs,
                Relation::Eq => lhs == c.rhs,
            }
        })
    }
}

fn rat_f64(r: &BigRational) -> f64 {
    crate::oracle::rational_to_f64(r)
}

fn rat(x: f64) -> Result<BigRational, LpError> {
    BigRational::from_float(x).ok_or_else(|| LpError::BadInput(format!("{x} is not finite")))
}

/// Builds the constraint system for ratio guesses `[r_lo, r_hi]`.
pub fn generate_lp(
    tree: &CouplingTree,
    r_lo: f64,
    r_hi: f64,
    t_star: f64,
) -> Result<LpSystem, LpError> {
    if !(r_lo >= 0.0 && r_hi >= 0.0 && t_star > 0.0) {
        return Err(LpError::BadInput(format!(
            "need r_lo, r_hi >= 0 and t* > 0 (got {r_lo}, {r_hi}, {t_star})"
        )));
    }
    generate_lp_exact(tree, &rat(r_lo)?, &rat(r_hi)?, &rat(t_star)?)
}

pub fn generate_lp_exact(
    tree: &CouplingTree,
    r_lo: &BigRational,
    r_hi: &BigRational,
    t_star: &BigRational,
) -> Result<LpSystem, LpError> {
    if !t_star.is_positive() {
        return Err(LpError::BadInput("t* must be positive".into()));
    }
    let one = BigRational::one();
    let zero = BigRational::zero();
    let kappa = BigRational::from_integer(BigInt::from(5)) / t_star;
    let q = tree.q as usize;
    let mut cons = Vec::new();
    cons.push(LinearConstraint {
        family: Family::Mass,
        terms: vec![(var_x(0), one.clone())],
        relation: Relation::Eq,
        rhs: one.clone(),
    });
    cons.push(LinearConstraint {
        family: Family::Mass,
        terms: vec![(var_y(0), one.clone())],
        relation: Relation::Eq,
        rhs: one.clone(),
    });
    let mut vacuous = true;
    for (id, node) in tree.nodes.iter().enumerate() {
        match node.status {
            NodeStatus::Halted { leaf } if tree.is_constrained_leaf(id) => {
                vacuous = false;
                let l = &tree.leaves[leaf];
                let nx = BigRational::from_integer(BigInt::from(l.nx.clone()));
                let ny = BigRational::from_integer(BigInt::from(l.ny.clone()));
                // r_lo * Ny * b <= Nx * a <= r_hi * Ny * b
                cons.push(LinearConstraint {
                    family: Family::Ratio,
                    terms: vec![(var_x(id), nx.clone()), (var_y(id), -(r_lo * &ny))],
                    relation: Relation::Ge,
                    rhs: zero.clone(),
                });
                cons.push(LinearConstraint {
                    family: Family::Ratio,
                    terms: vec![(var_x(id), nx), (var_y(id), -(r_hi * &ny))],
                    relation: Relation::Le,
                    rhs: zero.clone(),
                });
            }
            NodeStatus::Internal { first_child, .. } => {
                for c in 0..q {
                    let mut row = vec![(var_x(id), -one.clone())];
                    let mut col = vec![(var_y(id), -one.clone())];
                    for c2 in 0..q {
                        row.push((var_x(first_child + c * q + c2), one.clone()));
                        col.push((var_y(first_child + c2 * q + c), one.clone()));
                    }
                    for terms in [row, col] {
                        cons.push(LinearConstraint {
                            family: Family::Mass,
                            terms,
                            relation: Relation::Eq,
                            rhs: zero.clone(),
                        });
                    }
                }
                for cx in 0..q {
                    for cy in (0..q).filter(|&cy| cy != cx) {
                        let ch = first_child + cx * q + cy;
                        for (vc, vp) in [(var_x(ch), var_x(id)), (var_y(ch), var_y(id))] {
                            cons.push(LinearConstraint {
                                family: Family::Cap,
                                terms: vec![(vc, one.clone()), (vp, -kappa.clone())],
                                relation: Relation::Le,
                                rhs: zero.clone(),
                            });
                        }
                    }
                }
            }
            _ => {}
        }
    }
    Ok(LpSystem {
        num_vars: 2 * tree.len(),
        constraints: cons,
        vacuous,
        r_lo: r_lo.clone(),
        r_hi: r_hi.clone(),
    })
}

/// Number of constraints `generate_lp` emits for `tree`.
pub fn constraint_count(tree: &CouplingTree) -> usize {
    let st = tree.stats();
    let q = tree.q as usize;
    2 * st.halted_below_cap + 2 * q * st.internal + 2 * st.internal * q * (q - 1) + 2
}

/// Feasibility of the whole system as one LP, each constraint relaxed by
/// `tol` after scaling its largest coefficient to one.
pub fn feasible(sys: &LpSystem, tol: f64) -> Result<bool, LpError> {
    if tol <= 0.0 {
        return Err(LpError::BadInput("tol must be positive".into()));
    }
    if sys.constraints.is_empty() {
        return Ok(true);
    }
    let mut p = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> = (0..sys.num_vars).map(|_| p.add_var(0.0, (0.0, 1.0))).collect();
    for c in &sys.constraints {
        let mut terms: Vec<(usize, f64)> = c.terms.iter().map(|(v, k)| (*v, rat_f64(k))).collect();
        let mut rhs = rat_f64(&c.rhs);
        let scale = terms
            .iter()
            .map(|t| t.1.abs())
            .chain(std::iter::once(rhs.abs()))
            .fold(0.0, f64::max);
        if scale > 0.0 {
            for t in &mut terms {
                t.1 /= scale;
            }
            rhs /= scale;
        }
        let expr: Vec<_> = terms.iter().map(|&(v, k)| (vars[v], k)).collect();
        match c.relation {
            Relation::Le => p.add_constraint(&expr[..], ComparisonOp::Le, rhs + tol),
            Relation::Ge => p.add_constraint(&expr[..], ComparisonOp::Ge, rhs - tol),
            Relation::Eq => {
                p.add_constraint(&expr[..], ComparisonOp::Le, rhs + tol);
                p.add_constraint(&expr[..], ComparisonOp::Ge, rhs - tol);
            }
        }
    }
    match p.solve() {
        Ok(_) => Ok(true),
        Err(microlp::Error::Infeasible) => Ok(false),
        Err(e) => Err(LpError::Numerical(e.to_string())),
    }
}

/// Feasible directions of a subtree, normalised to `a + b = 1` and
/// described by the y-share `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cone {
    /// Only `a = b = 0`.
    Zero,
    Interval(f64, f64),
}

impl Cone {
    const FULL: Cone = Cone::Interval(0.0, 1.0);

    fn is_full(self) -> bool {
        self == Cone::FULL
    }

    pub fn contains(self, b: f64) -> bool {
        match self {
            Cone::Zero => false,
            Cone::Interval(lo, hi) => lo <= b && b <= hi,
        }
    }
}

/// Decides feasibility bottom-up: each subtree's feasible `(a, b)` pairs
/// form a cone, computed from the children's cones by two small LPs.
/// Cones that do not depend on the ratio guesses are computed once.
#[derive(Debug, Clone)]
pub struct ConeSolver<'t> {
    tree: &'t CouplingTree,
    kappa: f64,
    tol: f64,
    /// Cones of subtrees independent of the ratio guesses.
    base: Vec<Cone>,
    /// Nodes whose cone depends on the ratio guesses, in descending order.
    dynamic: Vec<usize>,
    vacuous: bool,
}

impl<'t> ConeSolver<'t> {
    pub fn new(tree: &'t CouplingTree, t_star: f64, tol: f64) -> Result<Self, LpError> {
        let mut solver = ConeSolver {
            tree,
            kappa: 5.0 / t_star,
            tol,
            base: vec![Cone::FULL; tree.len()],
            dynamic: Vec::new(),
            vacuous: true,
        };
        let mut is_dynamic = vec![false; tree.len()];
        for id in (0..tree.len()).rev() {
            match tree.nodes[id].status {
                NodeStatus::Halted { leaf } if tree.is_constrained_leaf(id) => {
                    solver.vacuous = false;
                    let l = &tree.leaves[leaf];
                    if l.nx.is_zero() || l.ny.is_zero() {
                        solver.base[id] = solver.leaf_cone(id, 1.0, 1.0);
                    } else {
                        is_dynamic[id] = true;
                    }
                }
                NodeStatus::Internal { .. } => {
                    if tree.children(id).any(|c| is_dynamic[c]) {
                        is_dynamic[id] = true;
                    } else {
                        solver.base[id] = solver.internal_cone(id, &solver.base)?;
                    }
                }
                _ => {}
            }
        }
        solver.dynamic = (0..tree.len()).rev().filter(|&i| is_dynamic[i]).collect();
        Ok(solver)
    }

    fn leaf_cone(&self, id: usize, r_lo: f64, r_hi: f64) -> Cone {
        let l = self.tree.leaf(id).expect("halted leaf");
        if l.nx.is_zero() && l.ny.is_zero() {
            return Cone::FULL;
        }
        let (nx, ny) = (l.nx_f64(), l.ny_f64());
        // b in [Nx / (Nx + r_hi Ny), Nx / (Nx + r_lo Ny)]
        let share = |r: f64| {
            let d = nx + r * ny;
            if d == 0.0 {
                0.0
            } else {
                nx / d
            }
        };
        let lo = (share(r_hi) - self.tol).max(0.0);
        let hi = (share(r_lo) + self.tol).min(1.0);
        if lo > hi {
            Cone::Zero
        } else {
            Cone::Interval(lo, hi)
        }
    }

    fn internal_cone(&self, id: usize, cones: &[Cone]) -> Result<Cone, LpError> {
        let q = self.tree.q as usize;
        let first = self.tree.children(id).start;
        let kids: Vec<Cone> = (0..q * q).map(|j| cones[first + j]).collect();
        if kids.iter().all(|c| c.is_full()) {
            return Ok(Cone::FULL);
        }
        let lo = self.extreme(q, &kids, OptimizationDirection::Minimize)?;
        let hi = self.extreme(q, &kids, OptimizationDirection::Maximize)?;
        Ok(match (lo, hi) {
            (Some(lo), Some(hi)) => Cone::Interval(lo.clamp(0.0, 1.0), hi.clamp(0.0, 1.0).max(lo.clamp(0.0, 1.0))),
            _ => Cone::Zero,
        })
    }

    fn extreme(&self, q: usize, kids: &[Cone], dir: OptimizationDirection) -> Result<Option<f64>, LpError> {
        let mut p = Problem::new(dir);
        let beta = p.add_var(1.0, (0.0, 1.0));
        // Per child: (a terms, b terms) over its generator weights.
        let mut a_terms: Vec<Vec<(microlp::Variable, f64)>> = vec![Vec::new(); q * q];
        let mut b_terms: Vec<Vec<(microlp::Variable, f64)>> = vec![Vec::new(); q * q];
        for (j, cone) in kids.iter().enumerate() {
            if let Cone::Interval(lo, hi) = *cone {
                for g in [lo, hi] {
                    let w = p.add_var(0.0, (0.0, f64::INFINITY));
                    a_terms[j].push((w, 1.0 - g));
                    b_terms[j].push((w, g));
                }
            }
        }
        for c in 0..q {
            let mut row: Vec<_> = (0..q).flat_map(|c2| a_terms[c * q + c2].clone()).collect();
            row.push((beta, 1.0));
            p.add_constraint(&row[..], ComparisonOp::Eq, 1.0);
            let mut col: Vec<_> = (0..q).flat_map(|c2| b_terms[c2 * q + c].clone()).collect();
            col.push((beta, -1.0));
            p.add_constraint(&col[..], ComparisonOp::Eq, 0.0);
        }
        if self.kappa < 1.0 {
            for cx in 0..q {
                for cy in (0..q).filter(|&cy| cy != cx) {
                    let j = cx * q + cy;
                    if a_terms[j].is_empty() {
                        continue;
                    }
                    let mut a = a_terms[j].clone();
                    a.push((beta, self.kappa));
                    p.add_constraint(&a[..], ComparisonOp::Le, self.kappa);
                    let mut b = b_terms[j].clone();
                    b.push((beta, -self.kappa));
                    p.add_constraint(&b[..], ComparisonOp::Le, 0.0);
                }
            }
        }
        match p.solve() {
            Ok(out) => match out.into_solution() {
                Ok(sol) => Ok(Some(sol.var_value(beta))),
                Err(_) => Err(LpError::Numerical("solve interrupted".into())),
            },
            Err(microlp::Error::Infeasible) => Ok(None),
            Err(e) => Err(LpError::Numerical(e.to_string())),
        }
    }

    /// Root cone for ratio guesses `[r_lo, r_hi]`.
    pub fn root_cone(&self, r_lo: f64, r_hi: f64) -> Result<Cone, LpError> {
        if self.dynamic.is_empty() {
            return Ok(self.base[0]);
        }
        let mut cones = self.base.clone();
        for &id in &self.dynamic {
            cones[id] = match self.tree.nodes[id].status {
                NodeStatus::Halted { .. } => self.leaf_cone(id, r_lo, r_hi),
                _ => self.internal_cone(id, &cones)?,
            };
        }
        Ok(cones[0])
    }

    pub fn feasible(&self, r_lo: f64, r_hi: f64) -> Result<bool, LpError> {
        Ok(self.root_cone(r_lo, r_hi)?.contains(0.5))
    }

    /// No halted leaf below the depth cap.
    pub fn is_vacuous(&self) -> bool {
        self.vacuous
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct RatioBracket {
    pub r_lo: f64,
    pub r_hi: f64,
    pub gamma: f64,
}

impl RatioBracket {
    pub fn new(r_lo: f64, r_hi: f64, gamma: f64) -> Self {
        RatioBracket { r_lo, r_hi, gamma }
    }

    pub fn width(&self) -> f64 {
        (self.r_hi / self.r_lo).ln()
    }

    /// Geometric mean of the ends.
    pub fn point(&self) -> f64 {
        (self.r_lo * self.r_hi).sqrt()
    }

    /// Whether `r` lies in the bracket widened by `e^{±gamma}`.
    pub fn contains(&self, r: f64) -> bool {
        (-self.gamma).exp() * self.r_lo <= r * (1.0 + 1e-12) && r <= self.gamma.exp() * self.r_hi * (1.0 + 1e-12)
    }
}

/// Which feasibility procedure drives the search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    #[default]
    Cone,
    Flat,
}

/// Feasibility of `[r_lo, r_hi]` for a tree with the chosen engine.
pub fn tree_feasible(
    tree: &CouplingTree,
    r_lo: f64,
    r_hi: f64,
    t_star: f64,
    tol: f64,
    engine: Engine,
) -> Result<bool, LpError> {
    match engine {
        Engine::Cone => ConeSolver::new(tree, t_star, tol)?.feasible(r_lo, r_hi),
        Engine::Flat => feasible(&generate_lp(tree, r_lo, r_hi, t_star)?, tol),
    }
}

pub fn binary_search_ratio(
    tree: &CouplingTree,
    initial: RatioBracket,
    target_width: f64,
    t_star: f64,
    tol: f64,
) -> Result<RatioBracket, LpError> {
    binary_search_with(tree, initial, target_width, t_star, tol, Engine::Cone)
}

pub fn binary_search_with(
    tree: &CouplingTree,
    initial: RatioBracket,
    target_width: f64,
    t_star: f64,
    tol: f64,
    engine: Engine,
) -> Result<RatioBracket, LpError> {
    Checker::new(tree, t_star, tol, engine)?.search(initial, target_width)
}

/// A tree with its feasibility engine, reused across ratio guesses.
struct Checker<'t> {
    tree: &'t CouplingTree,
    cone: ConeSolver<'t>,
    engine: Engine,
    t_star: f64,
    tol: f64,
}

impl<'t> Checker<'t> {
    fn new(tree: &'t CouplingTree, t_star: f64, tol: f64, engine: Engine) -> Result<Self, LpError> {
        Ok(Checker {
            tree,
            cone: ConeSolver::new(tree, t_star, tol)?,
            engine,
            t_star,
            tol,
        })
    }

    fn feasible(&self, a: f64, b: f64) -> Result<bool, LpError> {
        match self.engine {
            Engine::Cone => self.cone.feasible(a, b),
            Engine::Flat => feasible(&generate_lp(self.tree, a, b, self.t_star)?, self.tol),
        }
    }

    fn search(&self, initial: RatioBracket, target_width: f64) -> Result<RatioBracket, LpError> {
        if !(initial.r_lo > 0.0 && initial.r_lo <= initial.r_hi && target_width > 0.0) {
            return Err(LpError::BadInput(format!(
                "bracket [{}, {}] with width {target_width}",
                initial.r_lo, initial.r_hi
            )));
        }
        if self.cone.is_vacuous() {
            return Err(LpError::Vacuous);
        }
        let (mut a, mut b) = (initial.r_lo, initial.r_hi);
        if !self.feasible(a, b)? {
            return Err(LpError::InitialInfeasible { lo: a, hi: b });
        }
        while (b / a).ln() > target_width + 1e-12 {
            let m = (a * b).sqrt();
            if self.feasible(a, m)? {
                b = m;
            } else if self.feasible(m, b)? {
                a = m;
            } else {
                return Err(LpError::BothHalvesInfeasible { lo: a, hi: b });
            }
        }
        Ok(RatioBracket::new(a, b, initial.gamma))
    }
}

/// Exact `(p_x, p_y)` per node implied by the coupling and the uniform
/// distributions conditioned on the root colours.
///
/// Where a side has no proper completion the conditional value is 0/0; there
/// the parent's mass is routed to the diagonal child, which keeps every
/// row and column sum intact.
pub fn truth_values(
    inst: &Instance,
    tree: &CouplingTree,
    oracle: &Oracle,
) -> Result<Vec<(BigRational, BigRational)>, LpError> {
    let cfg = tree.config;
    let coupler = Coupler::new(inst, cfg.k2);
    let root = coupler.root(cfg.v, cfg.c1, cfg.c2)?;
    let c1 = oracle.count_with(inst, &root.x)?;
    let c2 = oracle.count_with(inst, &root.y)?;
    let mut out = vec![(BigRational::zero(), BigRational::zero()); tree.len()];
    let one = BigRational::one();
    // (node, state, coupling mass, inherited x value, inherited y value)
    let mut stack = vec![(0usize, root, one.clone(), one.clone(), one)];
    while let Some((id, s, mu, inh_x, inh_y)) = stack.pop() {
        let cx_count = oracle.count_with(inst, &s.x)?;
        let cy_count = oracle.count_with(inst, &s.y)?;
        let a = if cx_count.is_zero() {
            inh_x
        } else {
            &mu * BigRational::new(c1.clone().into(), cx_count.clone().into())
        };
        let b = if cy_count.is_zero() {
            inh_y
        } else {
            &mu * BigRational::new(c2.clone().into(), cy_count.clone().into())
        };
        out[id] = (a.clone(), b.clone());
        let NodeStatus::Internal { u, .. } = tree.nodes[id].status else {
            continue;
        };
        let px = conditional(inst, oracle, &s.x, u, &cx_count)?;
        let py = conditional(inst, oracle, &s.y, u, &cy_count)?;
        let joint = maximal_coupling(&px, &py);
        for cx in 0..tree.q {
            for cy in 0..tree.q {
                let m = joint
                    .iter()
                    .find(|t| t.0 == cx as usize && t.1 == cy as usize)
                    .map(|t| t.2.clone())
                    .unwrap_or_else(BigRational::zero);
                let child = tree.child(id, cx, cy).expect("internal node");
                let mut next = s.clone();
                coupler.extend_in_place(&mut next, u, cx, cy);
                let diag = |v: &BigRational| if cx == cy { v.clone() } else { BigRational::zero() };
                stack.push((child, next, &mu * m, diag(&a), diag(&b)));
            }
        }
    }
    Ok(out)
}

fn conditional(
    inst: &Instance,
    oracle: &Oracle,
    x: &PartialColouring,
    u: usize,
    total: &num_bigint::BigUint,
) -> Result<Vec<BigRational>, LpError> {
    let q = inst.q() as usize;
    if total.is_zero() {
        return Ok(vec![BigRational::zero(); q]);
    }
    let mut xc = x.clone();
    let mut p = Vec::with_capacity(q);
    for c in 0..inst.q() {
        xc.set(u, c);
        let part = oracle.count_with(inst, &xc)?;
        p.push(BigRational::new(part.into(), total.clone().into()));
    }
    Ok(p)
}

/// Flattens truth values into an LP point.
pub fn truth_point(values: &[(BigRational, BigRational)]) -> Vec<BigRational> {
    values
        .iter()
        .flat_map(|(a, b)| [a.clone(), b.clone()])
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginalOptions {
    pub tol: f64,
    /// Explicit initial bracket; otherwise derived from the marginal bounds
    /// when `in_regime`, else `[DEFAULT_DELTA, 1 / DEFAULT_DELTA]`.
    pub bracket: Option<(f64, f64)>,
    pub in_regime: bool,
    pub node_budget: usize,
    pub engine: Engine,
}

impl Default for MarginalOptions {
    fn default() -> Self {
        MarginalOptions {
            tol: DEFAULT_TOL,
            bracket: None,
            in_regime: false,
            node_budget: crate::coupling::tree::node_budget_from_env(),
            engine: Engine::Cone,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ColourBracket {
    pub colour: Colour,
    pub bracket: RatioBracket,
    /// Point estimate of `Pr[colour] / Pr[c]`.
    pub ratio: f64,
    pub tree_nodes: usize,
    pub lp_constraints: usize,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct MarginalEstimate {
    pub p_hat: f64,
    pub brackets: Vec<ColourBracket>,
    pub gamma: f64,
    pub tree_nodes: usize,
    pub lp_constraints: usize,
    pub lp_solve_ms: f64,
}

pub fn initial_bracket(q: Colour, t_star: f64, in_regime: bool) -> (f64, f64) {
    if in_regime {
        let b = marginal_bounds(q, t_star);
        let (lo, hi) = (b.lower_f64(), b.upper_f64());
        if lo > 0.0 {
            return (lo / hi, hi / lo);
        }
    }
    (DEFAULT_DELTA, 1.0 / DEFAULT_DELTA)
}

pub fn estimate_marginal(
    inst: &Instance,
    v: usize,
    c: Colour,
    eps: f64,
    params: &AlgoParams,
) -> Result<MarginalEstimate, LpError> {
    estimate_marginal_with(inst, v, c, eps, params, &MarginalOptions::default())
}

pub fn estimate_marginal_with(
    inst: &Instance,
    v: usize,
    c: Colour,
    eps: f64,
    params: &AlgoParams,
    opts: &MarginalOptions,
) -> Result<MarginalEstimate, LpError> {
    if v >= inst.n() || c >= inst.q() {
        return Err(LpError::BadInput(format!("vertex {v} or colour {c} out of range")));
    }
    if eps <= 0.0 {
        return Err(LpError::BadInput("eps must be positive".into()));
    }
    let started = Instant::now();
    let others: Vec<Colour> = (0..inst.q()).filter(|&c2| c2 != c).collect();
    let results: Vec<Result<Option<ColourBracket>, LpError>> = others
        .par_iter()
        .map(|&c2| ratio_for(inst, v, c2, c, eps, params, opts))
        .collect();
    let mut brackets = Vec::with_capacity(others.len());
    let mut denominator_zero = false;
    for r in results {
        match r? {
            Some(b) => brackets.push(b),
            None => denominator_zero = true,
        }
    }
    let tree_nodes = brackets.iter().map(|b| b.tree_nodes).sum();
    let lp_constraints = brackets.iter().map(|b| b.lp_constraints).sum();
    let p_hat = if denominator_zero {
        0.0
    } else {
        1.0 / (1.0 + brackets.iter().map(|b| b.ratio).sum::<f64>())
    };
    Ok(MarginalEstimate {
        p_hat,
        brackets,
        gamma: params.gamma,
        tree_nodes,
        lp_constraints,
        lp_solve_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

/// Brackets `Pr[c_num] / Pr[c_den]` at `v`. `None` signals that `c_den`
/// itself has probability zero.
fn ratio_for(
    inst: &Instance,
    v: usize,
    c_num: Colour,
    c_den: Colour,
    eps: f64,
    params: &AlgoParams,
    opts: &MarginalOptions,
) -> Result<Option<ColourBracket>, LpError> {
    let cfg = |c1, c2| TreeConfig {
        v,
        c1,
        c2,
        k1: params.k1,
        k2: params.k2,
        depth: params.depth,
        node_budget: opts.node_budget,
    };
    let tree = CouplingTree::build(inst, cfg(c_num, c_den))?;
    let lp_constraints = constraint_count(&tree);
    let (lo, hi) = opts
        .bracket
        .unwrap_or_else(|| initial_bracket(inst.q(), params.t_star, opts.in_regime));
    let done = |bracket: RatioBracket, ratio: f64| ColourBracket {
        colour: c_num,
        bracket,
        ratio,
        tree_nodes: tree.len(),
        lp_constraints,
    };
    let check = Checker::new(&tree, params.t_star, opts.tol, opts.engine)?;
    if check.cone.is_vacuous() {
        return Err(LpError::Vacuous);
    }
    if check.feasible(lo, hi)? {
        let b = check.search(RatioBracket::new(lo, hi, params.gamma), eps)?;
        return Ok(Some(done(b, b.point())));
    }
    if check.feasible(0.0, 0.0)? {
        return Ok(Some(done(RatioBracket::new(0.0, 0.0, params.gamma), 0.0)));
    }
    let swapped = CouplingTree::build(inst, cfg(c_den, c_num))?;
    if Checker::new(&swapped, params.t_star, opts.tol, opts.engine)?.feasible(0.0, 0.0)? {
        return Ok(None);
    }
    // Widen the bracket before giving up.
    let (mut a, mut b) = (lo, hi);
    for _ in 0..3 {
        a *= DEFAULT_DELTA;
        b /= DEFAULT_DELTA;
        if check.feasible(a, b)? {
            let r = check.search(RatioBracket::new(a, b, params.gamma), eps)?;
            return Ok(Some(done(r, r.point())));
        }
    }
    Err(LpError::InitialInfeasible { lo, hi })
}
