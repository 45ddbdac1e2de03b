//! Exact counting, marginals and uniform sampling by enumeration.
//!
//! Colourings are enumerated in lexicographic vertex order with pruning at
//! each edge's last vertex. The hypergraph is split into connected
//! components first and isolated vertices contribute a factor of `q` each,
//! so the enumeration budget applies to the largest component only.

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use thiserror::Error;

use crate::instance::{Colour, FullColouring, Instance, PartialColouring};

/// Default cap on `|component| * log2(q)` for a single enumeration.
pub const DEFAULT_BUDGET_BITS: f64 = 26.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("enumeration needs {needed:.1} bits, budget is {budget:.1}")]
    BudgetExceeded { needed: f64, budget: f64 },
    #[error("instance has no proper colouring")]
    Empty,
    #[error("no proper colouring has vertex {vertex} coloured {colour}")]
    ZeroDenominator { vertex: usize, colour: Colour },
    #[error("vertex {0} out of range")]
    VertexOutOfRange(usize),
    #[error("colour {0} out of range")]
    ColourOutOfRange(Colour),
}

/// Exact count plus, optionally, the full marginal table.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactResult {
    pub count: BigUint,
    pub marginals: Option<Vec<Vec<BigRational>>>,
}

/// One connected block of free vertices with the edges inside it, in local
/// coordinates.
#[derive(Debug, Clone)]
struct Component {
    vertices: Vec<usize>,
    /// Edges grouped by the local index of their last vertex.
    closing: Vec<Vec<LocalEdge>>,
}

#[derive(Debug, Clone)]
struct LocalEdge {
    vertices: Vec<usize>,
    pin: Option<Colour>,
}

impl LocalEdge {
    fn ok(&self, colours: &[Colour]) -> bool {
        let first = self.pin.unwrap_or(colours[self.vertices[0]]);
        self.vertices.iter().any(|&v| colours[v] != first)
    }
}

/// Decomposition of an instance conditioned on a partial colouring.
#[derive(Debug, Clone)]
struct Decomposition {
    q: Colour,
    free_isolated: Vec<usize>,
    components: Vec<Component>,
    /// Some edge is already violated by the fixed colours.
    dead: bool,
}

fn decompose(inst: &Instance, fixed: &PartialColouring) -> Decomposition {
    let pinned = inst.pin_partial(fixed);
    let n = inst.n();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut a: usize) -> usize {
        while p[a] != a {
            p[a] = p[p[a]];
            a = p[a];
        }
        a
    }
    let mut dead = false;
    let mut in_edge = vec![false; n];
    for e in pinned.edges() {
        if e.is_empty() {
            dead = true;
            continue;
        }
        let vs = e.vertices();
        for &v in vs {
            in_edge[v] = true;
        }
        let r0 = find(&mut parent, vs[0]);
        for &v in &vs[1..] {
            let r = find(&mut parent, v);
            if r != r0 {
                let (lo, hi) = if r < r0 { (r, r0) } else { (r0, r) };
                parent[hi] = lo;
            }
        }
    }
    // Roots are re-resolved because the merge above may have moved them.
    let mut comp_of = vec![usize::MAX; n];
    let mut components: Vec<Component> = Vec::new();
    let mut local = vec![0usize; n];
    let mut free_isolated = Vec::new();
    for v in 0..n {
        if fixed.is_coloured(v) {
            continue;
        }
        if !in_edge[v] {
            free_isolated.push(v);
            continue;
        }
        let r = find(&mut parent, v);
        if comp_of[r] == usize::MAX {
            comp_of[r] = components.len();
            components.push(Component {
                vertices: Vec::new(),
                closing: Vec::new(),
            });
        }
        let c = &mut components[comp_of[r]];
        local[v] = c.vertices.len();
        c.vertices.push(v);
        c.closing.push(Vec::new());
    }
    for e in pinned.edges() {
        if e.is_empty() {
            continue;
        }
        let r = find(&mut parent, e.vertices()[0]);
        let c = &mut components[comp_of[r]];
        let vs: Vec<usize> = e.vertices().iter().map(|&v| local[v]).collect();
        let last = *vs.iter().max().unwrap();
        c.closing[last].push(LocalEdge {
            vertices: vs,
            pin: e.pinned().first().copied(),
        });
    }
    Decomposition {
        q: inst.q(),
        free_isolated,
        components,
        dead,
    }
}

impl Decomposition {
    fn check_budget(&self, budget: f64) -> Result<(), OracleError> {
        let lq = (self.q as f64).log2();
        for c in &self.components {
            let needed = c.vertices.len() as f64 * lq;
            if needed > budget {
                return Err(OracleError::BudgetExceeded { needed, budget });
            }
        }
        Ok(())
    }
}

/// Visits every proper colouring of a component in lexicographic order.
/// The visitor returns `false` to stop early.
fn for_each_colouring(comp: &Component, q: Colour, mut visit: impl FnMut(&[Colour]) -> bool) {
    let m = comp.vertices.len();
    if m == 0 {
        visit(&[]);
        return;
    }
    let mut colours = vec![0 as Colour; m];
    let mut i = 0usize;
    // colours[i] holds the next candidate for position i.
    loop {
        if colours[i] >= q {
            if i == 0 {
                return;
            }
            colours[i] = 0;
            i -= 1;
            colours[i] += 1;
            continue;
        }
        if comp.closing[i].iter().all(|e| e.ok(&colours)) {
            if i + 1 == m {
                if !visit(&colours) {
                    return;
                }
                colours[i] += 1;
            } else {
                i += 1;
                colours[i] = 0;
            }
        } else {
            colours[i] += 1;
        }
    }
}

fn component_count(comp: &Component, q: Colour) -> u128 {
    let mut total: u128 = 0;
    for_each_colouring(comp, q, |_| {
        total += 1;
        true
    });
    total
}

/// Exact oracle with a configurable enumeration budget.
#[derive(Debug, Clone, Copy)]
pub struct Oracle {
    pub budget_bits: f64,
}

impl Default for Oracle {
    fn default() -> Self {
        Oracle {
            budget_bits: DEFAULT_BUDGET_BITS,
        }
    }
}

impl Oracle {
    pub fn with_budget(budget_bits: f64) -> Self {
        Oracle { budget_bits }
    }

    pub fn count(&self, inst: &Instance) -> Result<BigUint, OracleError> {
        self.count_with(inst, &PartialColouring::blank(inst.n()))
    }

    /// Number of proper colourings consistent with `fixed`.
    pub fn count_with(
        &self,
        inst: &Instance,
        fixed: &PartialColouring,
    ) -> Result<BigUint, OracleError> {
        let d = decompose(inst, fixed);
        if d.dead {
            return Ok(BigUint::zero());
        }
        d.check_budget(self.budget_bits)?;
        let mut total = BigUint::from(d.q).pow(d.free_isolated.len() as u32);
        for c in &d.components {
            let k = component_count(c, d.q);
            if k == 0 {
                return Ok(BigUint::zero());
            }
            total *= BigUint::from(k);
        }
        Ok(total)
    }

    pub fn marginal(
        &self,
        inst: &Instance,
        v: usize,
        c: Colour,
    ) -> Result<BigRational, OracleError> {
        check_vc(inst, v, c)?;
        let total = self.count(inst)?;
        if total.is_zero() {
            return Err(OracleError::Empty);
        }
        let mut x = PartialColouring::blank(inst.n());
        x.set(v, c);
        let part = self.count_with(inst, &x)?;
        Ok(BigRational::new(part.into(), total.into()))
    }

    /// `|{sigma : sigma(v) = c1}| / |{sigma : sigma(v) = c2}|`.
    pub fn ratio(
        &self,
        inst: &Instance,
        v: usize,
        c1: Colour,
        c2: Colour,
    ) -> Result<BigRational, OracleError> {
        check_vc(inst, v, c1)?;
        check_vc(inst, v, c2)?;
        let mut x = PartialColouring::blank(inst.n());
        x.set(v, c1);
        let num = self.count_with(inst, &x)?;
        x.set(v, c2);
        let den = self.count_with(inst, &x)?;
        if den.is_zero() {
            return Err(OracleError::ZeroDenominator {
                vertex: v,
                colour: c2,
            });
        }
        Ok(BigRational::new(num.into(), den.into()))
    }

    /// Count together with the marginal table of every vertex.
    pub fn exact(&self, inst: &Instance) -> Result<ExactResult, OracleError> {
        let count = self.count(inst)?;
        if count.is_zero() {
            return Ok(ExactResult {
                count,
                marginals: None,
            });
        }
        let mut table = Vec::with_capacity(inst.n());
        let mut x = PartialColouring::blank(inst.n());
        for v in 0..inst.n() {
            let mut row = Vec::with_capacity(inst.q() as usize);
            for c in 0..inst.q() {
                x.set(v, c);
                let part = self.count_with(inst, &x)?;
                row.push(BigRational::new(part.into(), count.clone().into()));
            }
            x.clear(v);
            table.push(row);
        }
        Ok(ExactResult {
            count,
            marginals: Some(table),
        })
    }

    /// Every proper colouring consistent with `fixed`, in lexicographic
    /// order. Only sensible for tiny instances.
    pub fn enumerate_with(
        &self,
        inst: &Instance,
        fixed: &PartialColouring,
    ) -> Result<Vec<FullColouring>, OracleError> {
        let n = inst.n();
        let q = inst.q();
        let needed = (0..n).filter(|&v| !fixed.is_coloured(v)).count() as f64 * (q as f64).log2();
        if needed > self.budget_bits {
            return Err(OracleError::BudgetExceeded {
                needed,
                budget: self.budget_bits,
            });
        }
        let free: Vec<usize> = (0..n).filter(|&v| !fixed.is_coloured(v)).collect();
        let mut sigma: Vec<Colour> = (0..n).map(|v| fixed.get(v).unwrap_or(0)).collect();
        let mut out = Vec::new();
        loop {
            if inst.is_proper(&sigma) {
                out.push(sigma.clone());
            }
            // Increment the odometer with the last free vertex fastest.
            let mut i = free.len();
            loop {
                if i == 0 {
                    return Ok(out);
                }
                i -= 1;
                let v = free[i];
                sigma[v] += 1;
                if sigma[v] < q {
                    break;
                }
                sigma[v] = 0;
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(
        &self,
        inst: &Instance,
        rng: &mut R,
    ) -> Result<FullColouring, OracleError> {
        self.sample_with(inst, &PartialColouring::blank(inst.n()), rng)
    }

    /// Uniform proper colouring consistent with `fixed`.
    pub fn sample_with<R: Rng + ?Sized>(
        &self,
        inst: &Instance,
        fixed: &PartialColouring,
        rng: &mut R,
    ) -> Result<FullColouring, OracleError> {
        let d = decompose(inst, fixed);
        if d.dead {
            return Err(OracleError::Empty);
        }
        d.check_budget(self.budget_bits)?;
        let mut sigma: Vec<Colour> = (0..inst.n()).map(|v| fixed.get(v).unwrap_or(0)).collect();
        for comp in &d.components {
            let total = component_count(comp, d.q);
            if total == 0 {
                return Err(OracleError::Empty);
            }
            let target = rng.gen_range(0..total);
            let mut seen = 0u128;
            for_each_colouring(comp, d.q, |cols| {
                if seen == target {
                    for (i, &v) in comp.vertices.iter().enumerate() {
                        sigma[v] = cols[i];
                    }
                    return false;
                }
                seen += 1;
                true
            });
        }
        for &v in &d.free_isolated {
            sigma[v] = rng.gen_range(0..d.q);
        }
        Ok(sigma)
    }
}

fn check_vc(inst: &Instance, v: usize, c: Colour) -> Result<(), OracleError> {
    if v >= inst.n() {
        return Err(OracleError::VertexOutOfRange(v));
    }
    if c >= inst.q() {
        return Err(OracleError::ColourOutOfRange(c));
    }
    Ok(())
}

/// Caches the proper colourings of each component so that repeated uniform
/// draws cost one index lookup per component.
#[derive(Debug, Clone)]
pub struct ExactSampler {
    n: usize,
    q: Colour,
    fixed: PartialColouring,
    free_isolated: Vec<usize>,
    tables: Vec<(Vec<usize>, Vec<Vec<Colour>>)>,
}

impl ExactSampler {
    pub fn new(inst: &Instance, oracle: &Oracle) -> Result<Self, OracleError> {
        Self::with_fixed(inst, &PartialColouring::blank(inst.n()), oracle)
    }

    pub fn with_fixed(
        inst: &Instance,
        fixed: &PartialColouring,
        oracle: &Oracle,
    ) -> Result<Self, OracleError> {
        let d = decompose(inst, fixed);
        if d.dead {
            return Err(OracleError::Empty);
        }
        d.check_budget(oracle.budget_bits)?;
        let mut tables = Vec::with_capacity(d.components.len());
        for comp in &d.components {
            let mut list = Vec::new();
            for_each_colouring(comp, d.q, |cols| {
                list.push(cols.to_vec());
                true
            });
            if list.is_empty() {
                return Err(OracleError::Empty);
            }
            tables.push((comp.vertices.clone(), list));
        }
        Ok(ExactSampler {
            n: inst.n(),
            q: d.q,
            fixed: fixed.clone(),
            free_isolated: d.free_isolated,
            tables,
        })
    }

    /// Number of proper colourings consistent with the fixed part.
    pub fn count(&self) -> BigUint {
        let mut total = BigUint::from(self.q).pow(self.free_isolated.len() as u32);
        for (_, list) in &self.tables {
            total *= BigUint::from(list.len());
        }
        total
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> FullColouring {
        let mut sigma: Vec<Colour> = (0..self.n)
            .map(|v| self.fixed.get(v).unwrap_or(0))
            .collect();
        for (vertices, list) in &self.tables {
            let pick = &list[rng.gen_range(0..list.len())];
            for (i, &v) in vertices.iter().enumerate() {
                sigma[v] = pick[i];
            }
        }
        for &v in &self.free_isolated {
            sigma[v] = rng.gen_range(0..self.q);
        }
        sigma
    }
}

pub fn exact_count(inst: &Instance) -> Result<BigUint, OracleError> {
    Oracle::default().count(inst)
}

pub fn exact_marginal(inst: &Instance, v: usize, c: Colour) -> Result<BigRational, OracleError> {
    Oracle::default().marginal(inst, v, c)
}

pub fn exact_ratio(
    inst: &Instance,
    v: usize,
    c1: Colour,
    c2: Colour,
) -> Result<BigRational, OracleError> {
    Oracle::default().ratio(inst, v, c1, c2)
}

pub fn exact_sample<R: Rng + ?Sized>(
    inst: &Instance,
    rng: &mut R,
) -> Result<FullColouring, OracleError> {
    Oracle::default().sample(inst, rng)
}

/// Lossy conversion used for statistics and diagnostics.
pub fn rational_to_f64(r: &BigRational) -> f64 {
    if r.is_zero() {
        return 0.0;
    }
    match (r.numer().to_f64(), r.denom().to_f64()) {
        (Some(a), Some(b)) if a.is_finite() && b.is_finite() => a / b,
        _ => {
            let shift = r.numer().bits() as i64 - r.denom().bits() as i64;
            let scaled = if shift >= 0 {
                r / BigRational::from_integer(num_bigint::BigInt::one() << shift as usize)
            } else {
                r * BigRational::from_integer(num_bigint::BigInt::one() << (-shift) as usize)
            };
            scaled.to_f64().unwrap_or(f64::NAN) * 2f64.powi(shift as i32)
        }
    }
}
