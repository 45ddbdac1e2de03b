//! Approximate counting by self-reduction: pin a base colouring one vertex
//! at a time and multiply the inverse marginals.

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use thiserror::Error;

use crate::instance::{Colour, Instance, InstanceError};
use crate::lll::{good_base_colouring, LllError};
use crate::lp::{estimate_marginal_with, LpError, MarginalOptions};
use crate::oracle::{Oracle, OracleError};
use crate::params::AlgoParams;

/// Default resample cap for the base colouring.
pub const DEFAULT_MAX_RESAMPLES: u64 = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CounterError {
    #[error("edge of size {size} at step {step} is below k1 = {k1}; the base colouring is not prefix-proper")]
    EdgeTooSmall { step: usize, size: usize, k1: usize },
    #[error("base colouring has length {got}, expected {want}")]
    BadColouring { got: usize, want: usize },
    #[error("marginal of the pinned colour is zero at vertex {0}")]
    ZeroMarginal(usize),
    #[error("eps must be positive")]
    BadEps,
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Lll(#[from] LllError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// One self-reduction step: the instance before pinning, and the pin.
#[derive(Debug, Clone, PartialEq)]
pub struct PinStep {
    pub instance: Instance,
    pub vertex: usize,
    pub colour: Colour,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PinnedSequence {
    pub steps: Vec<PinStep>,
    /// Vertices never pinned.
    pub free: usize,
}

/// Pins `sigma` in global vertex order, skipping vertices outside every
/// surviving edge, until no edge is left.
pub fn pinned_sequence(
    inst: &Instance,
    sigma: &[Colour],
    k1: usize,
) -> Result<PinnedSequence, CounterError> {
    if sigma.len() != inst.n() {
        return Err(CounterError::BadColouring {
            got: sigma.len(),
            want: inst.n(),
        });
    }
    let mut cur = inst.clone();
    let mut steps = Vec::new();
    while cur.num_edges() > 0 {
        if let Some(e) = cur.edges().iter().find(|e| e.len() < k1) {
            return Err(CounterError::EdgeTooSmall {
                step: steps.len(),
                size: e.len(),
                k1,
            });
        }
        let u = (0..cur.n())
            .find(|&u| cur.edges().iter().any(|e| e.contains(u)))
            .expect("a surviving edge has a vertex");
        let next = cur.pin_vertex(u, sigma[u])?;
        steps.push(PinStep {
            instance: cur,
            vertex: u,
            colour: sigma[u],
        });
        cur = next;
    }
    Ok(PinnedSequence {
        free: inst.n() - steps.len(),
        steps,
    })
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct StepRecord {
    pub vertex: usize,
    pub colour: Colour,
    pub p_hat: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CountEstimate {
    /// Natural log of the estimate.
    pub log_estimate: f64,
    pub eps: f64,
    pub steps: Vec<StepRecord>,
    pub free_vertices: usize,
    /// Exact value, present when the marginals came from the oracle.
    pub exact: Option<String>,
}

impl CountEstimate {
    /// The estimate itself when it fits in a double.
    pub fn estimate(&self) -> Option<f64> {
        let v = self.log_estimate.exp();
        v.is_finite().then_some(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountOptions {
    pub oracle_marginals: bool,
    pub marginal: MarginalOptions,
    pub max_resamples: u64,
}

impl Default for CountOptions {
    fn default() -> Self {
        CountOptions {
            oracle_marginals: false,
            marginal: MarginalOptions::default(),
            max_resamples: DEFAULT_MAX_RESAMPLES,
        }
    }
}

pub fn count<R: Rng + ?Sized>(
    inst: &Instance,
    eps: f64,
    params: &AlgoParams,
    rng: &mut R,
) -> Result<CountEstimate, CounterError> {
    count_with(inst, eps, params, rng, &CountOptions::default())
}

pub fn count_with<R: Rng + ?Sized>(
    inst: &Instance,
    eps: f64,
    params: &AlgoParams,
    rng: &mut R,
    opts: &CountOptions,
) -> Result<CountEstimate, CounterError> {
    if eps <= 0.0 {
        return Err(CounterError::BadEps);
    }
    let sigma = good_base_colouring(inst, params.k1, rng, opts.max_resamples)?;
    let seq = pinned_sequence(inst, &sigma, params.k1)?;
    let ln_q = (inst.q() as f64).ln();
    let step_eps = eps / inst.n().max(1) as f64;
    let mut steps = Vec::with_capacity(seq.steps.len());
    let mut log_estimate = seq.free as f64 * ln_q;
    let mut exact = None;
    if opts.oracle_marginals {
        let oracle = Oracle::default();
        let mut prod = BigRational::one();
        for s in &seq.steps {
            let p = oracle.marginal(&s.instance, s.vertex, s.colour)?;
            if p.is_zero() {
                return Err(CounterError::ZeroMarginal(s.vertex));
            }
            let pf = crate::oracle::rational_to_f64(&p);
            log_estimate -= pf.ln();
            steps.push(StepRecord {
                vertex: s.vertex,
                colour: s.colour,
                p_hat: pf,
            });
            prod *= p;
        }
        let z = BigRational::from_integer(BigUint::from(inst.q()).pow(seq.free as u32).into()) / prod;
        // Use the exact value for the log when it is representable.
        if let Some(f) = z.to_f64().filter(|f| f.is_finite() && *f > 0.0) {
            log_estimate = f.ln();
        }
        exact = Some(z.to_string());
    } else {
        for s in &seq.steps {
            let est = estimate_marginal_with(
                &s.instance,
                s.vertex,
                s.colour,
                step_eps,
                params,
                &opts.marginal,
            )?;
            if est.p_hat <= 0.0 {
                return Err(CounterError::ZeroMarginal(s.vertex));
            }
            log_estimate -= est.p_hat.ln();
            steps.push(StepRecord {
                vertex: s.vertex,
                colour: s.colour,
                p_hat: est.p_hat,
            });
        }
    }
    Ok(CountEstimate {
        log_estimate,
        eps,
        steps,
        free_vertices: seq.free,
        exact,
    })
}
