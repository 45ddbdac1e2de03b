//! Parameter settlement and regime checks.
//!
//! The settled parameters are `k1 = floor(13k/14)`, `k2 = floor(3k/7)` for
//! counting and `k1 = floor(13k/16)`, `k2 = floor(3k/8)` for sampling, both
//! with `beta = 1/2`. The headline thresholds are `357 Δ^(14/(k-14))` and
//! `931 Δ^(16/(k-16/3))`.

use num_rational::Ratio;
use serde::Serialize;

use crate::instance::Instance;
use crate::lll::GUARD;

pub const COUNTING_CONSTANT: f64 = 357.0;
pub const SAMPLING_CONSTANT: f64 = 931.0;
pub const MIN_K: usize = 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Counting,
    Sampling,
}

impl Mode {
    /// Exponent numerator and offset: threshold is `C Δ^(a/(k-b))`.
    fn exponent(self) -> (Ratio<i64>, Ratio<i64>) {
        match self {
            Mode::Counting => (Ratio::from_integer(14), Ratio::from_integer(14)),
            Mode::Sampling => (Ratio::from_integer(16), Ratio::new(16, 3)),
        }
    }

    pub fn constant(self) -> f64 {
        match self {
            Mode::Counting => COUNTING_CONSTANT,
            Mode::Sampling => SAMPLING_CONSTANT,
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "counting" => Ok(Mode::Counting),
            "sampling" => Ok(Mode::Sampling),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Settled {
    pub k1: usize,
    pub k2: usize,
    pub beta: f64,
}

pub fn settle_counting(k: usize) -> Settled {
    Settled {
        k1: 13 * k / 14,
        k2: 3 * k / 7,
        beta: 0.5,
    }
}

pub fn settle_sampling(k: usize) -> Settled {
    Settled {
        k1: 13 * k / 16,
        k2: 3 * k / 8,
        beta: 0.5,
    }
}

pub fn settle(k: usize, mode: Mode) -> Settled {
    match mode {
        Mode::Counting => settle_counting(k),
        Mode::Sampling => settle_sampling(k),
    }
}

/// `C Δ^(a/(k-b))` with the mode's constant; infinite when `k <= b`.
pub fn headline_threshold(k: usize, delta: usize, mode: Mode) -> f64 {
    let (a, b) = mode.exponent();
    let denom = Ratio::from_integer(k as i64) - b;
    if denom <= Ratio::from_integer(0) {
        return f64::INFINITY;
    }
    let e = a / denom;
    mode.constant() * (delta as f64).powf(*e.numer() as f64 / *e.denom() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub lhs: f64,
    pub relation: &'static str,
    pub rhs: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeReport {
    pub k: usize,
    pub delta: usize,
    pub q: u64,
    pub mode: Mode,
    pub settled: Settled,
    pub in_regime: bool,
    pub checks: Vec<Check>,
}

impl RegimeReport {
    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

// Comparisons are made on natural logs; ties within the guard band fail.
fn log_check(name: &str, ln_lhs: f64, relation: &'static str, ln_rhs: f64) -> Check {
    let margin = GUARD.ln_1p();
    let pass = ln_lhs.is_finite() && ln_rhs.is_finite() && ln_lhs - ln_rhs > margin;
    Check {
        name: name.to_string(),
        lhs: ln_lhs.exp(),
        relation,
        rhs: ln_rhs.exp(),
        pass,
    }
}

fn exact_check(name: &str, lhs: Ratio<i64>, rhs: Option<Ratio<i64>>) -> Check {
    let as_f = |r: Ratio<i64>| *r.numer() as f64 / *r.denom() as f64;
    Check {
        name: name.to_string(),
        lhs: as_f(lhs),
        relation: ">=",
        rhs: rhs.map(as_f).unwrap_or(f64::INFINITY),
        pass: rhs.is_some_and(|r| lhs >= r),
    }
}

fn ln_binom(n: usize, r: usize) -> f64 {
    (0..r).map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln()).sum()
}

/// The parameter block for one mode with an explicit constant `c`: the
/// three exponent inequalities that fix the settled values and the six
/// inequalities that must then hold.
pub fn block_checks(k: usize, delta: usize, q: u64, mode: Mode, c: f64) -> Vec<Check> {
    let s = settle(k, mode);
    let (a, b) = mode.exponent();
    let beta = Ratio::new(1i64, 2);
    let ki = k as i64;
    let (k1, k2) = (s.k1 as i64, s.k2 as i64);
    let pos = |r: Ratio<i64>| (r > Ratio::from_integer(0)).then_some(r);
    let expo = pos(Ratio::from_integer(ki) - b).map(|d| a / d);
    let one = Ratio::from_integer(1);
    let mut out = Vec::new();
    if let Some(expo) = expo {
        let r1 = pos(beta * Ratio::from_integer(k2 - 1)).map(|d| Ratio::from_integer(3) / d);
        let r2 = pos((one - beta) * Ratio::from_integer(k1 - k2 - 1))
            .map(|d| (Ratio::from_integer(4) - beta) / d);
        let slack = match mode {
            Mode::Counting => 1,
            Mode::Sampling => 3,
        };
        let r3 = pos(Ratio::from_integer(ki - k1 - 1)).map(|d| Ratio::from_integer(slack) / d);
        out.push(exact_check("exponent >= 3/(beta(k2-1))", expo, r1));
        out.push(exact_check("exponent >= (4-beta)/((1-beta)(k1-k2-1))", expo, r2));
        out.push(exact_check(
            &format!("exponent >= {slack}/(k-k1-1)"),
            expo,
            r3,
        ));
    } else {
        out.push(exact_check("exponent defined (k > B)", one, None));
    }

    out.push(Check {
        name: "k - k1 - 2 >= 0".into(),
        lhs: (ki - k1 - 2) as f64,
        relation: ">=",
        rhs: 0.0,
        pass: ki - k1 - 2 >= 0,
    });
    let bf = 0.5f64;
    let lnq = (q as f64).ln();
    let nan = f64::NAN;
    out.push(log_check(
        "q^(k2-1) > 1/beta",
        (k2 - 1) as f64 * lnq,
        ">",
        (1.0 / bf).ln(),
    ));
    let k1m2 = (k1 - 2) as f64;
    out.push(log_check(
        "q > (e k Δ)^(1/(k1-2))",
        lnq,
        ">",
        if k1 > 2 {
            (1.0 + (k as f64).ln() + (delta as f64).ln()) / k1m2
        } else {
            nan
        },
    ));
    let lnk = (k as f64).ln();
    let lnc = c.ln();
    let d1 = (k1 - k2 - 1) as f64;
    out.push(log_check(
        "C >= (5e (e^2 k^3)^(1/(1-beta)))^(1/(k1-k2-1))",
        lnc,
        ">=",
        if d1 > 0.0 {
            (5f64.ln() + 1.0 + (2.0 + 3.0 * lnk) / (1.0 - bf)) / d1
        } else {
            nan
        },
    ));
    let d2 = bf * (k2 - 1) as f64;
    out.push(log_check(
        "C >= (e^(beta+3) k^3 / beta^beta * binom(k,k2))^(1/(beta(k2-1)))",
        lnc,
        ">=",
        if d2 > 0.0 {
            ((bf + 3.0) + 3.0 * lnk - bf * bf.ln() + ln_binom(k, s.k2)) / d2
        } else {
            nan
        },
    ));
    let d3 = (ki - k1 - 1) as f64;
    match mode {
        Mode::Counting => out.push(log_check(
            "C >= (4(k-k1))^(1/(k-k1-1))",
            lnc,
            ">=",
            if d3 > 0.0 {
                (4.0 * (ki - k1) as f64).ln() / d3
            } else {
                nan
            },
        )),
        Mode::Sampling => out.push(log_check(
            "C > (e^7 k^3)^(1/(k-k1-1))",
            lnc,
            ">",
            if d3 > 0.0 { (7.0 + 3.0 * lnk) / d3 } else { nan },
        )),
    }
    out
}

pub fn regime_check(k: usize, delta: usize, q: u64, mode: Mode) -> RegimeReport {
    let mut checks = vec![Check {
        name: format!("k >= {MIN_K}"),
        lhs: k as f64,
        relation: ">=",
        rhs: MIN_K as f64,
        pass: k >= MIN_K,
    }];
    let thr = headline_threshold(k, delta, mode);
    checks.push(log_check(
        "q > C Δ^(A/(k-B))",
        (q as f64).ln(),
        ">",
        thr.ln(),
    ));
    checks.extend(block_checks(k, delta, q, mode, mode.constant()));
    RegimeReport {
        k,
        delta,
        q,
        mode,
        settled: settle(k, mode),
        in_regime: checks.iter().all(|c| c.pass),
        checks,
    }
}

/// Slack parameter `5 (e^2 k^3 Δ^3)^(1/(1-beta))`.
pub fn default_t_star(k: usize, delta: usize, beta: f64) -> f64 {
    let e2 = std::f64::consts::E.powi(2);
    5.0 * (e2 * (k as f64).powi(3) * (delta as f64).powi(3)).powf(1.0 / (1.0 - beta))
}

/// Truncation depth `k^3 Δ^2 ceil(ln(4/eps))`.
pub fn default_depth(k: usize, delta: usize, eps: f64) -> usize {
    let unit = k.pow(3) * delta.pow(2);
    unit * (4.0 / eps).ln().ceil().max(1.0) as usize
}

/// Sampler failure threshold `k^2 Δ ln(2 n Δ / eps)`.
pub fn sampler_threshold(k: usize, delta: usize, n: usize, eps: f64) -> f64 {
    (k * k * delta) as f64 * (2.0 * n as f64 * delta as f64 / eps).ln()
}

/// Truncation error `4 exp(-L/(k^3 Δ^2))`.
pub fn gamma(depth: usize, k: usize, delta: usize) -> f64 {
    let unit = (k.pow(3) * delta.pow(2)).max(1) as f64;
    4.0 * (-(depth as f64) / unit).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RuntimeParams {
    pub t_star: f64,
    pub depth: usize,
    pub sampler_threshold: f64,
}

pub fn derive_runtime_params(
    k: usize,
    delta: usize,
    beta: f64,
    eps: f64,
    n: usize,
    _mode: Mode,
) -> RuntimeParams {
    RuntimeParams {
        t_star: default_t_star(k, delta, beta),
        depth: default_depth(k, delta, eps),
        sampler_threshold: sampler_threshold(k, delta, n, eps),
    }
}

/// Tuning knobs for one run of the coupling/LP machinery.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlgoParams {
    pub mode: Mode,
    pub k1: usize,
    pub k2: usize,
    pub beta: f64,
    pub t_star: f64,
    pub depth: usize,
    pub gamma: f64,
}

/// Optional user overrides; `None` means "derive".
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Overrides {
    pub k1: Option<usize>,
    pub k2: Option<usize>,
    pub beta: Option<f64>,
    pub t_star: Option<f64>,
    pub depth: Option<usize>,
}

/// Outcome of deriving parameters, with the warnings worth surfacing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Derived {
    pub params: AlgoParams,
    pub in_regime: bool,
    pub warnings: Vec<String>,
}

/// Settles parameters for an instance. Below the guaranteed regime the
/// settled `k1` and `k2` are clamped to `k1 <= k - 2` and `k2 < k1`
/// (allowing `k2 = 0`, which disables the k2 rule), and the slack defaults
/// to `t* = 5`, which makes the per-vertex caps vacuous.
pub fn derive(inst: &Instance, eps: f64, mode: Mode, ov: Overrides) -> Derived {
    let k = inst.k_max().max(2);
    let delta = inst.delta().max(1);
    let s = settle(k, mode);
    let mut warnings = Vec::new();
    let report = regime_check(k, delta, inst.q() as u64, mode);
    if k < MIN_K {
        warnings.push(format!(
            "k = {k} is below {MIN_K}; accuracy guarantees do not apply"
        ));
    }
    let mut k1 = ov.k1.unwrap_or(s.k1);
    if ov.k1.is_none() && k1 + 2 > k {
        k1 = k.saturating_sub(2).max(1);
        warnings.push(format!("k1 clamped from {} to {k1}", s.k1));
    }
    let mut k2 = ov.k2.unwrap_or(s.k2);
    if ov.k2.is_none() && k2 >= k1 {
        k2 = k1.saturating_sub(1);
        warnings.push(format!("k2 clamped from {} to {k2}", s.k2));
    }
    let beta = ov.beta.unwrap_or(s.beta);
    let t_star = match ov.t_star {
        Some(t) => {
            warnings.push(format!(
                "t* overridden to {t}; the per-vertex coupling bound no longer follows from the local lemma"
            ));
            t
        }
        None if report.in_regime => default_t_star(k, delta, beta),
        None => 5.0,
    };
    let depth = ov.depth.unwrap_or_else(|| default_depth(k, delta, eps));
    Derived {
        params: AlgoParams {
            mode,
            k1,
            k2,
            beta,
            t_star,
            depth,
            gamma: gamma(depth, k, delta),
        },
        in_regime: report.in_regime,
        warnings,
    }
}
