//! Local lemma checks, marginal bounds and Moser–Tardos resampling.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::One;
use rand::Rng;
use thiserror::Error;

use crate::instance::{Colour, FullColouring, Instance};

/// Relative guard band applied to floating threshold comparisons.
pub const GUARD: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LllError {
    #[error("k' must be at least 2, got {0}")]
    KPrimeTooSmall(usize),
    #[error("k' = {k_prime} exceeds the smallest edge size {k_min}")]
    KPrimeTooLarge { k_prime: usize, k_min: usize },
    #[error("no proper colouring found within {0} resamples")]
    ResampleLimit(u64),
    #[error("k1 = {k1} leaves fewer than two prefix vertices in an edge of size {size}")]
    PrefixTooShort { k1: usize, size: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LllCheckConfig {
    pub t: f64,
    pub k_prime: usize,
}

/// `(e t Δ)^(1/(k'-1))`.
pub fn lll_threshold(t: f64, delta: usize, k_prime: usize) -> f64 {
    (std::f64::consts::E * t * delta as f64).powf(1.0 / (k_prime as f64 - 1.0))
}

/// Whether `q` clears the marginal-control threshold. Ties and values inside
/// the guard band count as failures.
pub fn check_lll(inst: &Instance, cfg: LllCheckConfig) -> Result<bool, LllError> {
    if cfg.k_prime < 2 {
        return Err(LllError::KPrimeTooSmall(cfg.k_prime));
    }
    if inst.num_edges() > 0 && cfg.k_prime > inst.k_min() {
        return Err(LllError::KPrimeTooLarge {
            k_prime: cfg.k_prime,
            k_min: inst.k_min(),
        });
    }
    if inst.delta() == 0 {
        return Ok(true);
    }
    let thr = lll_threshold(cfg.t, inst.delta(), cfg.k_prime);
    Ok(inst.q() as f64 > thr * (1.0 + GUARD))
}

/// Verifies the weighted local lemma condition edge by edge:
/// `Pr[e monochromatic] <= x(e) * prod over neighbours (1 - x(e'))`.
pub fn check_lll_weighted(inst: &Instance, x: &[f64]) -> bool {
    assert_eq!(x.len(), inst.num_edges());
    let inc = inst.incidence();
    let q = inst.q() as f64;
    inst.edges().iter().enumerate().all(|(i, e)| {
        let free = if e.pinned().is_empty() {
            e.len() as f64 - 1.0
        } else {
            e.len() as f64
        };
        let p_mono = q.powf(-free);
        let mut nbrs: Vec<usize> = e
            .vertices()
            .iter()
            .flat_map(|&v| inc[v].iter().copied())
            .filter(|&j| j != i)
            .collect();
        nbrs.sort_unstable();
        nbrs.dedup();
        let rhs = nbrs.iter().fold(x[i], |acc, &j| acc * (1.0 - x[j]));
        p_mono <= rhs * (1.0 - GUARD)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginalBounds {
    pub lower: BigRational,
    pub upper: BigRational,
}

impl MarginalBounds {
    pub fn contains(&self, p: &BigRational) -> bool {
        &self.lower <= p && p <= &self.upper
    }

    pub fn lower_f64(&self) -> f64 {
        crate::oracle::rational_to_f64(&self.lower)
    }

    pub fn upper_f64(&self) -> f64 {
        crate::oracle::rational_to_f64(&self.upper)
    }
}

/// `((1 - 1/t)/q, (1 + 4/t)/q)`, exact for the binary value of `t`.
pub fn marginal_bounds(q: Colour, t: f64) -> MarginalBounds {
    let t = BigRational::from_float(t).expect("t must be finite");
    marginal_bounds_exact(q, &t)
}

pub fn marginal_bounds_exact(q: Colour, t: &BigRational) -> MarginalBounds {
    let one = BigRational::one();
    let q = BigRational::from_integer(BigInt::from(q));
    let inv = &one / t;
    MarginalBounds {
        lower: (&one - &inv) / &q,
        upper: (&one + inv * BigRational::from_integer(4.into())) / q,
    }
}

/// Uniform random colouring, then repeatedly recolour the first violated
/// edge until the colouring is proper.
pub fn moser_tardos<R: Rng + ?Sized>(
    inst: &Instance,
    rng: &mut R,
    max_resamples: u64,
) -> Result<FullColouring, LllError> {
    let q = inst.q();
    let mut sigma: Vec<Colour> = (0..inst.n()).map(|_| rng.gen_range(0..q)).collect();
    let inc = inst.incidence();
    let mut bad: Vec<bool> = (0..inst.num_edges())
        .map(|i| violated(inst, i, &sigma))
        .collect();
    // Ordered set of violated edges.
    let mut queue: std::collections::BTreeSet<usize> =
        bad.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect();
    let mut resamples = 0u64;
    while let Some(&first) = queue.iter().next() {
        if resamples >= max_resamples {
            return Err(LllError::ResampleLimit(max_resamples));
        }
        resamples += 1;
        for &v in inst.edge(first).vertices() {
            sigma[v] = rng.gen_range(0..q);
        }
        for &v in inst.edge(first).vertices() {
            for &j in &inc[v] {
                let now = violated(inst, j, &sigma);
                if now != bad[j] {
                    bad[j] = now;
                    if now {
                        queue.insert(j);
                    } else {
                        queue.remove(&j);
                    }
                }
            }
        }
        if inst.edge(first).is_empty() && bad[first] {
            // An empty unsatisfiable edge can never be repaired.
            return Err(LllError::ResampleLimit(max_resamples));
        }
    }
    assert!(inst.is_proper(&sigma));
    Ok(sigma)
}

fn violated(inst: &Instance, e: usize, sigma: &[Colour]) -> bool {
    let edge = inst.edge(e);
    let first = match edge.pinned().first() {
        Some(&c) => c,
        None => match edge.vertices().first() {
            Some(&v) => sigma[v],
            None => return true,
        },
    };
    edge.vertices().iter().all(|&v| sigma[v] == first)
}

/// Proper colouring whose restriction to the first `|e| - k1c` vertices of
/// every edge is already non-monochromatic.
pub fn good_base_colouring<R: Rng + ?Sized>(
    inst: &Instance,
    k1c: usize,
    rng: &mut R,
    max_resamples: u64,
) -> Result<FullColouring, LllError> {
    for e in inst.edges() {
        if e.len() < k1c + 2 {
            return Err(LllError::PrefixTooShort {
                k1: k1c,
                size: e.len(),
            });
        }
    }
    let prefix = prefix_instance(inst, k1c);
    let sigma = moser_tardos(&prefix, rng, max_resamples)?;
    assert!(prefix_proper(inst, k1c, &sigma));
    assert!(inst.is_proper(&sigma));
    Ok(sigma)
}

fn prefix_instance(inst: &Instance, k1c: usize) -> Instance {
    let edges = inst
        .edges()
        .iter()
        .map(|e| e.vertices()[..e.len() - k1c].to_vec())
        .collect();
    Instance::new(inst.n(), inst.q(), edges).expect("prefix of a valid edge is valid")
}

/// Every edge's first `|e| - k1c` vertices carry at least two colours.
pub fn prefix_proper(inst: &Instance, k1c: usize, sigma: &[Colour]) -> bool {
    inst.edges().iter().all(|e| {
        let p = &e.vertices()[..e.len().saturating_sub(k1c)];
        p.iter().any(|&v| sigma[v] != sigma[p[0]])
    })
}
