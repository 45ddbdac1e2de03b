//! Almost-uniform sampling: colour vertices one at a time from estimated
//! marginals while every incident edge keeps enough uncoloured vertices,
//! then complete the small leftover components exactly.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::instance::{Colour, FullColouring, Instance, PartialColouring};
use crate::lll::{moser_tardos, LllError};
use crate::lp::{estimate_marginal_with, LpError, MarginalOptions};
use crate::oracle::{rational_to_f64, ExactSampler, Oracle, OracleError};
use crate::params::{sampler_threshold, AlgoParams};

/// RNG stream for the residual enumeration.
const RESIDUAL_STREAM: u64 = u64::MAX - 1;
/// RNG stream for the fallback colouring.
const FALLBACK_STREAM: u64 = u64::MAX;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("eps must lie in (0, 1)")]
    BadEps,
    #[error("no colour has positive estimated probability at vertex {0}")]
    DeadVertex(usize),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Lll(#[from] LllError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Failure {
    /// A leftover component reached the size threshold.
    LargeComponent,
    /// A leftover component was too big to enumerate.
    EnumerationBudget,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SamplerOutcome {
    pub colouring: FullColouring,
    /// `(vertex, colour)` decisions of the sequential phase.
    pub path: Vec<(usize, Colour)>,
    pub residual_sizes: Vec<usize>,
    pub failed: bool,
    pub failure: Option<Failure>,
}

/// First uncoloured vertex whose surviving incident edges all keep more
/// than `k1s` uncoloured vertices. `None` once no edge survives.
pub fn eligible_vertex(inst: &Instance, x: &PartialColouring, k1s: usize) -> Option<usize> {
    eligible_in(&inst.pin_partial(x), x, k1s)
}

fn eligible_in(pinned: &Instance, x: &PartialColouring, k1s: usize) -> Option<usize> {
    if pinned.num_edges() == 0 {
        return None;
    }
    let inc = pinned.incidence();
    (0..pinned.n()).find(|&v| {
        !x.is_coloured(v) && inc[v].iter().all(|&e| pinned.edge(e).len() > k1s)
    })
}

/// Components of the hypergraph on the uncoloured vertices whose edges are
/// the uncoloured parts of the surviving edges. Sorted by smallest vertex.
pub fn residual_components(inst: &Instance, x: &PartialColouring) -> Vec<Vec<usize>> {
    let pinned = inst.pin_partial(x);
    let n = inst.n();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut a: usize) -> usize {
        while p[a] != a {
            p[a] = p[p[a]];
            a = p[a];
        }
        a
    }
    for e in pinned.edges() {
        let vs = e.vertices();
        for w in vs.iter().skip(1) {
            let (a, b) = (find(&mut parent, vs[0]), find(&mut parent, *w));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
    for v in (0..n).filter(|&v| !x.is_coloured(v)) {
        let r = find(&mut parent, v);
        groups.entry(r).or_default().push(v);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort();
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerOptions {
    /// Replace estimated marginals with exact ones.
    pub oracle_marginals: bool,
    pub marginal: MarginalOptions,
    /// Budget (log2 of the search space) for the residual enumeration.
    pub enum_budget_bits: f64,
    pub max_resamples: u64,
    /// Stop after the sequential phase and report the partial colouring.
    pub skip_residual: bool,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        SamplerOptions {
            oracle_marginals: false,
            marginal: MarginalOptions::default(),
            enum_budget_bits: crate::oracle::DEFAULT_BUDGET_BITS,
            max_resamples: crate::counter::DEFAULT_MAX_RESAMPLES,
            skip_residual: false,
        }
    }
}

/// Reusable sampler; caches the marginal distribution computed for each
/// partial colouring reached.
#[derive(Debug)]
pub struct Sampler<'a> {
    inst: &'a Instance,
    eps: f64,
    params: AlgoParams,
    opts: SamplerOptions,
    threshold: f64,
    cache: HashMap<PartialColouring, Vec<f64>>,
}

impl<'a> Sampler<'a> {
    pub fn new(
        inst: &'a Instance,
        eps: f64,
        params: AlgoParams,
        opts: SamplerOptions,
    ) -> Result<Self, SamplerError> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(SamplerError::BadEps);
        }
        let k = inst.k_max().max(2);
        let delta = inst.delta().max(1);
        Ok(Sampler {
            inst,
            eps,
            params,
            opts,
            threshold: sampler_threshold(k, delta, inst.n().max(1), eps),
            cache: HashMap::new(),
        })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Normalised distribution of the colour at `v` given `x`.
    pub fn distribution(
        &mut self,
        pinned: &Instance,
        x: &PartialColouring,
        v: usize,
    ) -> Result<Vec<f64>, SamplerError> {
        if let Some(p) = self.cache.get(x) {
            return Ok(p.clone());
        }
        let q = self.inst.q();
        let mut p = Vec::with_capacity(q as usize);
        if self.opts.oracle_marginals {
            let oracle = Oracle::default();
            for c in 0..q {
                p.push(rational_to_f64(&oracle.marginal(pinned, v, c)?));
            }
        } else {
            let step_eps = self.eps / (2 * self.inst.n().max(1)) as f64;
            for c in 0..q {
                let est = estimate_marginal_with(pinned, v, c, step_eps, &self.params, &self.opts.marginal)?;
                p.push(est.p_hat);
            }
        }
        let total: f64 = p.iter().sum();
        if total.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(SamplerError::DeadVertex(v));
        }
        for x in &mut p {
            *x /= total;
        }
        self.cache.insert(x.clone(), p.clone());
        Ok(p)
    }

    /// One sample. Decision `i` draws from stream `i` of a generator seeded
    /// with `seed`.
    pub fn sample(&mut self, seed: u64) -> Result<SamplerOutcome, SamplerError> {
        let n = self.inst.n();
        let mut x = PartialColouring::blank(n);
        let mut path = Vec::new();
        loop {
            let pinned = self.inst.pin_partial(&x);
            let Some(v) = eligible_in(&pinned, &x, self.params.k1) else {
                break;
            };
            let p = self.distribution(&pinned, &x, v)?;
            let mut rng = stream(seed, path.len() as u64);
            let c = pick(&p, rng.gen());
            x.set(v, c as Colour);
            path.push((v, c as Colour));
        }
        let comps = residual_components(self.inst, &x);
        let residual_sizes: Vec<usize> = comps.iter().map(|c| c.len()).collect();
        if residual_sizes.iter().any(|&s| s as f64 >= self.threshold) {
            return self.fallback(seed, path, residual_sizes, Failure::LargeComponent);
        }
        if self.opts.skip_residual {
            let colouring = x.slots().iter().map(|s| s.unwrap_or(Colour::MAX)).collect();
            return Ok(SamplerOutcome {
                colouring,
                path,
                residual_sizes,
                failed: false,
                failure: None,
            });
        }
        let oracle = Oracle::with_budget(self.opts.enum_budget_bits);
        let exact = match ExactSampler::with_fixed(self.inst, &x, &oracle) {
            Ok(s) => s,
            Err(OracleError::BudgetExceeded { .. }) => {
                return self.fallback(seed, path, residual_sizes, Failure::EnumerationBudget)
            }
            Err(e) => return Err(e.into()),
        };
        let colouring = exact.sample(&mut stream(seed, RESIDUAL_STREAM));
        assert!(self.inst.is_proper(&colouring));
        Ok(SamplerOutcome {
            colouring,
            path,
            residual_sizes,
            failed: false,
            failure: None,
        })
    }

    fn fallback(
        &self,
        seed: u64,
        path: Vec<(usize, Colour)>,
        residual_sizes: Vec<usize>,
        why: Failure,
    ) -> Result<SamplerOutcome, SamplerError> {
        let colouring = moser_tardos(self.inst, &mut stream(seed, FALLBACK_STREAM), self.opts.max_resamples)?;
        Ok(SamplerOutcome {
            colouring,
            path,
            residual_sizes,
            failed: true,
            failure: Some(why),
        })
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Inverse-CDF pick from a normalised distribution.
fn pick(p: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let last = p.iter().rposition(|&w| w > 0.0).unwrap_or(0);
    for (i, &w) in p.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    last
}

/// One sample with a fresh sampler.
pub fn sample(
    inst: &Instance,
    eps: f64,
    params: &AlgoParams,
    seed: u64,
) -> Result<SamplerOutcome, SamplerError> {
    Sampler::new(inst, eps, *params, SamplerOptions::default())?.sample(seed)
}
