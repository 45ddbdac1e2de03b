//! Command-line front end. Every subcommand prints one JSON document (or a
//! plain table) with the tool version, an echo of the parsed arguments and
//! the wall time.
//!
//! Exit codes: 0 success, 1 algorithmic failure, 2 usage error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::counter::{count_with, CountOptions, DEFAULT_MAX_RESAMPLES};
use crate::coupling::tree::{node_budget_from_env, TreeConfig};
use crate::coupling::{CouplingSimulator, CouplingTree, NodeStatus};
use crate::graphtools::{
    connected_set_bound, connected_sets, enumerate_23trees, line_graph, tree23_bound,
    DEFAULT_ENUM_BUDGET,
};
use crate::instance::{Colour, Instance};
use crate::lll::{good_base_colouring, moser_tardos, prefix_proper};
use crate::lp::{estimate_marginal_with, Engine, MarginalOptions};
use crate::oracle::{rational_to_f64, Oracle, DEFAULT_BUDGET_BITS};
use crate::params::{derive, regime_check, Mode, Overrides};
use crate::sampler::{Sampler, SamplerOptions};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser, Serialize)]
#[command(name = "chromatic-lll", version, about = "Counting and sampling proper hypergraph colourings")]
pub struct Cli {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    pub format: Format,
    /// Report every timing field as zero, so output is byte-reproducible.
    #[arg(long, global = true)]
    pub no_timing: bool,
    /// Worker threads for the parallel parts (default: all cores). Not
    /// echoed, since it never changes the output.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Counting,
    Sampling,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Counting => Mode::Counting,
            ModeArg::Sampling => Mode::Sampling,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineArg {
    Cone,
    Flat,
}

impl From<EngineArg> for Engine {
    fn from(e: EngineArg) -> Engine {
        match e {
            EngineArg::Cone => Engine::Cone,
            EngineArg::Flat => Engine::Flat,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GenKind {
    Random,
    Chain,
    Path,
    Single,
    Empty,
}

/// Parameter overrides shared by the estimator subcommands.
#[derive(Debug, Clone, Args, Serialize)]
pub struct ParamArgs {
    /// Vertices left blank at the end of each edge (k1).
    #[arg(long = "k1c", alias = "k1")]
    pub k1: Option<usize>,
    #[arg(long)]
    pub k2: Option<usize>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Depth cap of the coupling trees.
    #[arg(long)]
    pub depth: Option<usize>,
    /// Slack t*; overriding it drops the local lemma guarantee.
    #[arg(long)]
    pub tstar: Option<f64>,
    /// Initial ratio bracket.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    pub bracket: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value_t = EngineArg::Cone)]
    pub engine: EngineArg,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Approximate the number of proper colourings.
    Count {
        instance: PathBuf,
        #[arg(long)]
        eps: f64,
        /// Seed for the base colouring.
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        params: ParamArgs,
        /// Use exact marginals in place of the estimator.
        #[arg(long)]
        oracle_marginals: bool,
        #[arg(long, default_value_t = DEFAULT_MAX_RESAMPLES)]
        max_resamples: u64,
    },
    /// Draw approximately uniform proper colourings.
    Sample {
        instance: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 1)]
        samples: usize,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        params: ParamArgs,
        /// Report counts per distinct colouring instead of each sample.
        #[arg(long)]
        histogram: bool,
        #[arg(long)]
        oracle_marginals: bool,
    },
    /// Estimate one marginal probability.
    Marginal {
        instance: PathBuf,
        #[arg(long)]
        vertex: usize,
        #[arg(long)]
        colour: Colour,
        #[arg(long)]
        eps: f64,
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Exact count by enumeration.
    OracleCount {
        instance: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BUDGET_BITS)]
        budget_bits: f64,
    },
    /// Exact marginals; all vertices and colours unless narrowed.
    OracleMarginal {
        instance: PathBuf,
        #[arg(long)]
        vertex: Option<usize>,
        #[arg(long)]
        colour: Option<Colour>,
        #[arg(long, default_value_t = DEFAULT_BUDGET_BITS)]
        budget_bits: f64,
    },
    /// Exactly uniform samples.
    OracleSample {
        instance: PathBuf,
        #[arg(long, default_value_t = 1)]
        samples: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_BUDGET_BITS)]
        budget_bits: f64,
    },
    /// Any proper colouring, by resampling.
    FindColouring {
        instance: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_MAX_RESAMPLES)]
        max_resamples: u64,
    },
    /// A proper colouring whose edge prefixes are already bichromatic.
    BaseColouring {
        instance: PathBuf,
        #[arg(long)]
        k1c: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_MAX_RESAMPLES)]
        max_resamples: u64,
    },
    /// Evaluate the parameter inequalities for (k, delta, q).
    CheckRegime {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        delta: usize,
        #[arg(long)]
        q: u64,
        #[arg(long, value_enum)]
        mode: ModeArg,
    },
    /// Randomized coupling runs with exact conditional marginals.
    CoupleSim {
        instance: PathBuf,
        #[arg(long)]
        vertex: usize,
        #[arg(long)]
        c1: Colour,
        #[arg(long)]
        c2: Colour,
        #[arg(long, default_value_t = 1000)]
        runs: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        k1: usize,
        #[arg(long, default_value_t = 0)]
        k2: usize,
    },
    /// Build a truncated coupling tree and tally its nodes.
    TreeDump {
        instance: PathBuf,
        #[arg(long, default_value_t = 0)]
        vertex: usize,
        #[arg(long, default_value_t = 0)]
        c1: Colour,
        #[arg(long, default_value_t = 1)]
        c2: Colour,
        #[arg(long)]
        depth: usize,
        #[arg(long, default_value_t = 1)]
        k1: usize,
        #[arg(long, default_value_t = 0)]
        k2: usize,
        /// Also list every node.
        #[arg(long)]
        nodes: bool,
    },
    /// Count {2,3}-trees and connected sets of the line graph per size.
    TreeStats {
        instance: PathBuf,
        /// Line-graph node (edge index) the sets must contain.
        #[arg(long, default_value_t = 0)]
        root: usize,
        #[arg(long, default_value_t = 5)]
        max_size: usize,
        #[arg(long, default_value_t = DEFAULT_ENUM_BUDGET)]
        budget: usize,
    },
    /// Write a fixture instance in the text format.
    Generate {
        #[arg(long, value_enum)]
        kind: GenKind,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 3)]
        q: Colour,
        /// Edge count for `random`.
        #[arg(long, default_value_t = 1)]
        edges: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Count { .. } => "count",
            Command::Sample { .. } => "sample",
            Command::Marginal { .. } => "marginal",
            Command::OracleCount { .. } => "oracle-count",
            Command::OracleMarginal { .. } => "oracle-marginal",
            Command::OracleSample { .. } => "oracle-sample",
            Command::FindColouring { .. } => "find-colouring",
            Command::BaseColouring { .. } => "base-colouring",
            Command::CheckRegime { .. } => "check-regime",
            Command::CoupleSim { .. } => "couple-sim",
            Command::TreeDump { .. } => "tree-dump",
            Command::TreeStats { .. } => "tree-stats",
            Command::Generate { .. } => "generate",
        }
    }
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Failure(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failure(_) => 1,
        }
    }
}

fn fail<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Failure(e.to_string())
}

enum Output {
    Doc(Value),
    Text(String),
}

/// Entry point used by the binary.
pub fn main() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}

/// Parses `args`, runs the subcommand and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    0
                }
                _ => {
                    let _ = write!(err, "{text}");
                    2
                }
            };
        }
    };
    let started = Instant::now();
    let mut warnings = Vec::new();
    let result = match cli.threads {
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(|| dispatch(&cli, &mut warnings)),
            Err(e) => Err(CliError::Usage(e.to_string())),
        },
        None => dispatch(&cli, &mut warnings),
    };
    for w in &warnings {
        let _ = writeln!(err, "warning: {w}");
    }
    match result {
        Ok(Output::Text(s)) => {
            let _ = write!(out, "{s}");
            0
        }
        Ok(Output::Doc(mut result)) => {
            let wall_ms = if cli.no_timing {
                0.0
            } else {
                started.elapsed().as_secs_f64() * 1e3
            };
            if cli.no_timing {
                zero_timing(&mut result);
            }
            let doc = json!({
                "tool_version": TOOL_VERSION,
                "command": cli.command.name(),
                "config_echo": serde_json::to_value(&cli).unwrap_or(Value::Null),
                "wall_ms": wall_ms,
                "result": result,
            });
            let text = match cli.format {
                Format::Json => serde_json::to_string_pretty(&doc).expect("values serialize") + "\n",
                Format::Table => render_table(&doc),
            };
            let _ = write!(out, "{text}");
            0
        }
        Err(e) => {
            let msg = match &e {
                CliError::Usage(m) | CliError::Failure(m) => m,
            };
            let _ = writeln!(err, "error: {msg}");
            e.code()
        }
    }
}

fn zero_timing(v: &mut Value) {
    match v {
        Value::Object(map) => {
            for (k, x) in map.iter_mut() {
                if k.ends_with("_ms") {
                    *x = json!(0.0);
                } else {
                    zero_timing(x);
                }
            }
        }
        Value::Array(xs) => xs.iter_mut().for_each(zero_timing),
        _ => {}
    }
}

fn load(path: &Path) -> Result<Instance, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    Instance::parse(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn check_vertex(inst: &Instance, v: usize) -> Result<(), CliError> {
    if v >= inst.n() {
        return Err(CliError::Usage(format!("vertex {v} out of range (n = {})", inst.n())));
    }
    Ok(())
}

fn check_colour(inst: &Instance, c: Colour) -> Result<(), CliError> {
    if c >= inst.q() {
        return Err(CliError::Usage(format!("colour {c} out of range (q = {})", inst.q())));
    }
    Ok(())
}

fn check_eps(eps: f64) -> Result<(), CliError> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(CliError::Usage(format!("eps must lie in (0, 1), got {eps}")));
    }
    Ok(())
}

/// Rejects `k2 >= k1` and `k1 > k_min`.
fn check_ks(inst: &Instance, k1: usize, k2: usize) -> Result<(), CliError> {
    if k2 >= k1 || (inst.num_edges() > 0 && k1 > inst.k_min()) {
        return Err(CliError::Usage(format!(
            "need k2 < k1 <= k_min, got k1 = {k1}, k2 = {k2}, k_min = {}",
            inst.k_min()
        )));
    }
    Ok(())
}

struct Prepared {
    params: crate::params::AlgoParams,
    opts: MarginalOptions,
    in_regime: bool,
}

fn prepare(
    inst: &Instance,
    eps: f64,
    mode: Mode,
    p: &ParamArgs,
    warnings: &mut Vec<String>,
) -> Result<Prepared, CliError> {
    check_eps(eps)?;
    let ov = Overrides {
        k1: p.k1,
        k2: p.k2,
        beta: p.beta,
        t_star: p.tstar,
        depth: p.depth,
    };
    let d = derive(inst, eps, mode, ov);
    warnings.extend(d.warnings.iter().cloned());
    check_ks(inst, d.params.k1, d.params.k2)?;
    let bracket = match &p.bracket {
        Some(b) if b.len() == 2 && b[0] > 0.0 && b[0] <= b[1] => Some((b[0], b[1])),
        Some(b) => return Err(CliError::Usage(format!("bad bracket {b:?}"))),
        None => None,
    };
    Ok(Prepared {
        params: d.params,
        opts: MarginalOptions {
            bracket,
            in_regime: d.in_regime,
            engine: p.engine.into(),
            ..MarginalOptions::default()
        },
        in_regime: d.in_regime,
    })
}

/// Seed of child `i` of a master seed.
fn child_seed(seed: u64, i: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i);
    rng.next_u64()
}

fn dispatch(cli: &Cli, err: &mut Vec<String>) -> Result<Output, CliError> {
    match &cli.command {
        Command::Count {
            instance,
            eps,
            seed,
            params,
            oracle_marginals,
            max_resamples,
        } => {
            let inst = load(instance)?;
            let p = prepare(&inst, *eps, Mode::Counting, params, err)?;
            let opts = CountOptions {
                oracle_marginals: *oracle_marginals,
                marginal: p.opts,
                max_resamples: *max_resamples,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let est = count_with(&inst, *eps, &p.params, &mut rng, &opts).map_err(fail)?;
            Ok(Output::Doc(json!({
                "log_estimate": est.log_estimate,
                "estimate": est.estimate(),
                "exact": est.exact,
                "eps": est.eps,
                "steps": est.steps,
                "free_vertices": est.free_vertices,
                "params": p.params,
                "in_regime": p.in_regime,
            })))
        }
        Command::Sample {
            instance,
            eps,
            samples,
            seed,
            params,
            histogram,
            oracle_marginals,
        } => {
            let inst = load(instance)?;
            let p = prepare(&inst, *eps, Mode::Sampling, params, err)?;
            let opts = SamplerOptions {
                oracle_marginals: *oracle_marginals,
                marginal: p.opts,
                ..SamplerOptions::default()
            };
            let mut sampler = Sampler::new(&inst, *eps, p.params, opts).map_err(fail)?;
            let mut outcomes = Vec::with_capacity(*samples);
            for i in 0..*samples {
                outcomes.push(sampler.sample(child_seed(*seed, i as u64)).map_err(fail)?);
            }
            let failures = outcomes.iter().filter(|o| o.failed).count();
            let rate = if *samples == 0 {
                0.0
            } else {
                failures as f64 / *samples as f64
            };
            let body = if *histogram {
                let mut hist: BTreeMap<Vec<Colour>, usize> = BTreeMap::new();
                for o in &outcomes {
                    *hist.entry(o.colouring.clone()).or_default() += 1;
                }
                let rows: Vec<Value> = hist
                    .into_iter()
                    .map(|(c, n)| json!({"colouring": c, "count": n}))
                    .collect();
                json!({"histogram": rows})
            } else {
                let rows: Vec<Value> = outcomes
                    .iter()
                    .map(|o| {
                        json!({
                            "colouring": o.colouring,
                            "failed": o.failed,
                            "failure": o.failure,
                            "residual_sizes": o.residual_sizes,
                        })
                    })
                    .collect();
                json!({"samples": rows})
            };
            let mut body = body;
            body["count"] = json!(samples);
            body["failures"] = json!(failures);
            body["failure_rate"] = json!(rate);
            body["threshold"] = json!(sampler.threshold());
            body["params"] = json!(p.params);
            Ok(Output::Doc(body))
        }
        Command::Marginal {
            instance,
            vertex,
            colour,
            eps,
            params,
        } => {
            let inst = load(instance)?;
            check_vertex(&inst, *vertex)?;
            check_colour(&inst, *colour)?;
            let p = prepare(&inst, *eps, Mode::Counting, params, err)?;
            let est = estimate_marginal_with(&inst, *vertex, *colour, *eps, &p.params, &p.opts)
                .map_err(fail)?;
            // Ends of the marginal implied by the per-colour ratio brackets.
            let lo_sum: f64 = est.brackets.iter().map(|b| b.bracket.r_lo).sum();
            let hi_sum: f64 = est.brackets.iter().map(|b| b.bracket.r_hi).sum();
            Ok(Output::Doc(json!({
                "p_hat": est.p_hat,
                "bracket_lo": 1.0 / (1.0 + hi_sum),
                "bracket_hi": 1.0 / (1.0 + lo_sum),
                "gamma": est.gamma,
                "tree_nodes": est.tree_nodes,
                "lp_constraints": est.lp_constraints,
                "lp_solve_ms": est.lp_solve_ms,
                "ratios": est.brackets,
                "params": p.params,
            })))
        }
        Command::OracleCount {
            instance,
            budget_bits,
        } => {
            let inst = load(instance)?;
            let z = Oracle::with_budget(*budget_bits).count(&inst).map_err(fail)?;
            let f = rational_to_f64(&num_rational::BigRational::from_integer(z.clone().into()));
            Ok(Output::Doc(json!({
                "count": z.to_string(),
                "log_count": if f > 0.0 { json!(f.ln()) } else { Value::Null },
            })))
        }
        Command::OracleMarginal {
            instance,
            vertex,
            colour,
            budget_bits,
        } => {
            let inst = load(instance)?;
            let oracle = Oracle::with_budget(*budget_bits);
            let vs: Vec<usize> = match vertex {
                Some(v) => {
                    check_vertex(&inst, *v)?;
                    vec![*v]
                }
                None => (0..inst.n()).collect(),
            };
            let cs: Vec<Colour> = match colour {
                Some(c) => {
                    check_colour(&inst, *c)?;
                    vec![*c]
                }
                None => (0..inst.q()).collect(),
            };
            let mut rows = Vec::new();
            for &v in &vs {
                for &c in &cs {
                    let p = oracle.marginal(&inst, v, c).map_err(fail)?;
                    rows.push(json!({
                        "vertex": v,
                        "colour": c,
                        "exact": p.to_string(),
                        "p": rational_to_f64(&p),
                    }));
                }
            }
            Ok(Output::Doc(json!({ "marginals": rows })))
        }
        Command::OracleSample {
            instance,
            samples,
            seed,
            budget_bits,
        } => {
            let inst = load(instance)?;
            let s = crate::oracle::ExactSampler::new(&inst, &Oracle::with_budget(*budget_bits))
                .map_err(fail)?;
            let rows: Vec<Vec<Colour>> = (0..*samples)
                .map(|i| {
                    let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                    rng.set_stream(i as u64);
                    s.sample(&mut rng)
                })
                .collect();
            Ok(Output::Doc(json!({ "samples": rows, "count": s.count().to_string() })))
        }
        Command::FindColouring {
            instance,
            seed,
            max_resamples,
        } => {
            let inst = load(instance)?;
            let sigma = moser_tardos(&inst, &mut ChaCha8Rng::seed_from_u64(*seed), *max_resamples)
                .map_err(fail)?;
            Ok(Output::Doc(json!({
                "colouring": sigma,
                "proper": inst.is_proper(&sigma),
            })))
        }
        Command::BaseColouring {
            instance,
            k1c,
            seed,
            max_resamples,
        } => {
            let inst = load(instance)?;
            let sigma = good_base_colouring(
                &inst,
                *k1c,
                &mut ChaCha8Rng::seed_from_u64(*seed),
                *max_resamples,
            )
            .map_err(fail)?;
            Ok(Output::Doc(json!({
                "colouring": sigma,
                "k1c": k1c,
                "proper": inst.is_proper(&sigma),
                "prefix_proper": prefix_proper(&inst, *k1c, &sigma),
            })))
        }
        Command::CheckRegime { k, delta, q, mode } => {
            if *k < 2 {
                return Err(CliError::Usage("k must be at least 2".into()));
            }
            let report = regime_check(*k, *delta, *q, (*mode).into());
            Ok(Output::Doc(serde_json::to_value(report).map_err(fail)?))
        }
        Command::CoupleSim {
            instance,
            vertex,
            c1,
            c2,
            runs,
            seed,
            k1,
            k2,
        } => {
            let inst = load(instance)?;
            check_vertex(&inst, *vertex)?;
            check_colour(&inst, *c1)?;
            check_colour(&inst, *c2)?;
            check_ks(&inst, *k1, *k2)?;
            couple_sim(&inst, *vertex, *c1, *c2, *runs, *seed, *k1, *k2)
        }
        Command::TreeDump {
            instance,
            vertex,
            c1,
            c2,
            depth,
            k1,
            k2,
            nodes,
        } => {
            let inst = load(instance)?;
            check_vertex(&inst, *vertex)?;
            check_colour(&inst, *c1)?;
            check_colour(&inst, *c2)?;
            check_ks(&inst, *k1, *k2)?;
            let tree = CouplingTree::build(
                &inst,
                TreeConfig {
                    v: *vertex,
                    c1: *c1,
                    c2: *c2,
                    k1: *k1,
                    k2: *k2,
                    depth: *depth,
                    node_budget: node_budget_from_env(),
                },
            )
            .map_err(fail)?;
            Ok(Output::Doc(tree_dump(&tree, *nodes)))
        }
        Command::TreeStats {
            instance,
            root,
            max_size,
            budget,
        } => {
            let inst = load(instance)?;
            let g = line_graph(&inst);
            if *root >= g.len() {
                return Err(CliError::Usage(format!(
                    "root {root} out of range ({} edges)",
                    g.len()
                )));
            }
            let d = g.max_degree();
            let mut rows = Vec::new();
            for size in 1..=*max_size {
                let trees = enumerate_23trees(&g, *root, size, *budget).map_err(fail)?;
                let sets = connected_sets(&g, *root, size, *budget).map_err(fail)?;
                rows.push(json!({
                    "size": size,
                    "trees23": trees.len(),
                    "trees23_bound": tree23_bound(d, size),
                    "connected": sets.len(),
                    "connected_bound": connected_set_bound(d, size),
                }));
            }
            Ok(Output::Doc(json!({
                "root": root,
                "line_graph_nodes": g.len(),
                "max_degree": d,
                "per_size": rows,
            })))
        }
        Command::Generate {
            kind,
            n,
            k,
            q,
            edges,
            seed,
        } => {
            let inst = generate(*kind, *n, *k, *q, *edges, *seed)?;
            Ok(Output::Text(inst.serialize()))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn couple_sim(
    inst: &Instance,
    v: usize,
    c1: Colour,
    c2: Colour,
    runs: usize,
    seed: u64,
    k1: usize,
    k2: usize,
) -> Result<Output, CliError> {
    let mut sim = CouplingSimulator::new(inst, k1, k2, Oracle::default()).map_err(fail)?;
    let mut steps = Vec::with_capacity(runs);
    let mut v1_sizes = Vec::with_capacity(runs);
    let mut blocked = Vec::with_capacity(runs);
    let mut discrepancies = 0usize;
    let mut total_steps = 0usize;
    for i in 0..runs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let r = sim.run(v, c1, c2, &mut rng).map_err(fail)?;
        total_steps += r.trace.len();
        discrepancies += r.trace.iter().filter(|t| t.1 != t.2).count();
        steps.push(r.trace.len());
        v1_sizes.push(r.state.v1.iter().filter(|&&b| b).count());
        blocked.push(sim.coupler().blocked_edges(&r.state).len());
    }
    let mean = |xs: &[usize]| {
        if xs.is_empty() {
            0.0
        } else {
            xs.iter().sum::<usize>() as f64 / xs.len() as f64
        }
    };
    let mut v1_hist: BTreeMap<usize, usize> = BTreeMap::new();
    for &s in &v1_sizes {
        *v1_hist.entry(s).or_default() += 1;
    }
    Ok(Output::Doc(json!({
        "runs": runs,
        "mean_steps": mean(&steps),
        "max_steps": steps.iter().copied().max().unwrap_or(0),
        "mean_v1": mean(&v1_sizes),
        "max_v1": v1_sizes.iter().copied().max().unwrap_or(0),
        "mean_blocked_edges": mean(&blocked),
        "discrepancy_rate": if total_steps == 0 { 0.0 } else { discrepancies as f64 / total_steps as f64 },
        "v1_histogram": v1_hist.into_iter().map(|(s, n)| json!({"size": s, "runs": n})).collect::<Vec<_>>(),
    })))
}

fn tree_dump(tree: &CouplingTree, list_nodes: bool) -> Value {
    let cap = tree.depth_cap();
    let mut by_depth: BTreeMap<usize, [usize; 3]> = BTreeMap::new();
    for n in &tree.nodes {
        let slot = match n.status {
            NodeStatus::Internal { .. } => 0,
            NodeStatus::Halted { .. } => 1,
            NodeStatus::Truncated => 2,
        };
        by_depth.entry(n.depth()).or_default()[slot] += 1;
    }
    let depths: Vec<Value> = by_depth
        .into_iter()
        .map(|(d, [i, h, t])| json!({"depth": d, "internal": i, "halted": h, "truncated": t}))
        .collect();
    let mut doc = json!({
        "depth_cap": cap,
        "stats": tree.stats(),
        "by_depth": depths,
    });
    if list_nodes {
        let nodes: Vec<Value> = tree
            .nodes
            .iter()
            .enumerate()
            .map(|(id, n)| {
                let (status, extra) = match n.status {
                    NodeStatus::Internal { u, .. } => ("internal", json!({"next_vertex": u})),
                    NodeStatus::Halted { leaf } => {
                        let l = &tree.leaves[leaf];
                        ("halted", json!({"nx": l.nx.to_string(), "ny": l.ny.to_string()}))
                    }
                    NodeStatus::Truncated => ("truncated", json!({})),
                };
                json!({
                    "id": id,
                    "parent": n.parent,
                    "step": n.step,
                    "status": status,
                    "detail": extra,
                })
            })
            .collect();
        doc["nodes"] = json!(nodes);
    }
    doc
}

/// Fixture generator. Chains overlap consecutive edges in one vertex,
/// paths in `k - 1` vertices; random edges are drawn without repetition.
pub fn generate_instance(
    kind: GenKind,
    n: usize,
    k: usize,
    q: Colour,
    edges: usize,
    seed: u64,
) -> Result<Instance, String> {
    use rand::seq::index::sample;
    if k == 0 || q == 0 {
        return Err("k and q must be positive".into());
    }
    let list: Vec<Vec<usize>> = match kind {
        GenKind::Empty => Vec::new(),
        GenKind::Single => {
            if n < k {
                return Err(format!("need n >= k, got n = {n}, k = {k}"));
            }
            vec![(0..k).collect()]
        }
        GenKind::Chain => {
            if k < 2 || n < k {
                return Err("chains need k >= 2 and n >= k".into());
            }
            let step = k - 1;
            (0..)
                .map(|i| i * step)
                .take_while(|s| s + k <= n)
                .map(|s| (s..s + k).collect())
                .collect()
        }
        GenKind::Path => {
            if n < k {
                return Err(format!("need n >= k, got n = {n}, k = {k}"));
            }
            (0..=n - k).map(|s| (s..s + k).collect()).collect()
        }
        GenKind::Random => {
            if n < k {
                return Err(format!("need n >= k, got n = {n}, k = {k}"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut seen = std::collections::BTreeSet::new();
            let mut out = Vec::new();
            let mut tries = 0;
            while out.len() < edges && tries < 100 * edges.max(1) {
                tries += 1;
                let mut e = sample(&mut rng, n, k).into_vec();
                e.sort_unstable();
                if seen.insert(e.clone()) {
                    out.push(e);
                }
            }
            out
        }
    };
    Instance::new(n, q, list).map_err(|e| e.to_string())
}

fn generate(kind: GenKind, n: usize, k: usize, q: Colour, edges: usize, seed: u64) -> Result<Instance, CliError> {
    generate_instance(kind, n, k, q, edges, seed).map_err(CliError::Usage)
}

fn render_table(doc: &Value) -> String {
    let mut s = String::new();
    for key in ["command", "tool_version", "wall_ms"] {
        s.push_str(&format!("{key:<16} {}\n", scalar(&doc[key])));
    }
    let Value::Object(result) = &doc["result"] else {
        return s;
    };
    for (k, v) in result {
        match v {
            Value::Array(rows) if rows.first().is_some_and(Value::is_object) => {
                s.push_str(&format!("\n{k}\n"));
                let cols: Vec<String> = rows[0].as_object().map(|o| o.keys().cloned().collect()).unwrap_or_default();
                s.push_str(&cols.join("\t"));
                s.push('\n');
                for r in rows {
                    let cells: Vec<String> = cols.iter().map(|c| scalar(&r[c])).collect();
                    s.push_str(&cells.join("\t"));
                    s.push('\n');
                }
            }
            _ => s.push_str(&format!("{k:<16} {}\n", scalar(v))),
        }
    }
    s
}

fn scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => "-".into(),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_str(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(
            std::iter::once("chromatic-lll").chain(args.iter().copied()),
            &mut out,
            &mut err,
        );
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn check_regime_threshold() {
        let (code, out, _) = run_str(&["check-regime", "--k", "28", "--delta", "2", "--q", "715", "--mode", "counting"]);
        assert_eq!(code, 0);
        let v: Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["result"]["in_regime"], json!(true));
        for key in ["tool_version", "config_echo", "wall_ms"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        let (_, out, _) = run_str(&["check-regime", "--k", "28", "--delta", "2", "--q", "714", "--mode", "counting"]);
        let v: Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["result"]["in_regime"], json!(false));
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run_str(&["oracle-count", "/nonexistent/x.hg"]).0, 2);
        assert_eq!(run_str(&["count", "--eps", "0.1", "x.hg"]).0, 2);
        assert_eq!(run_str(&["bogus"]).0, 2);
    }

    #[test]
    fn generator_shapes() {
        let c = generate_instance(GenKind::Chain, 7, 3, 3, 0, 0).unwrap();
        assert_eq!(c.num_edges(), 3);
        let p = generate_instance(GenKind::Path, 6, 3, 3, 0, 0).unwrap();
        assert_eq!(p.num_edges(), 4);
        let r = generate_instance(GenKind::Random, 8, 3, 2, 5, 9).unwrap();
        assert_eq!(r.num_edges(), 5);
        assert_eq!(r, generate_instance(GenKind::Random, 8, 3, 2, 5, 9).unwrap());
    }

    #[test]
    fn table_format() {
        let (code, out, _) = run_str(&["--format", "table", "check-regime", "--k", "28", "--delta", "2", "--q", "715", "--mode", "counting"]);
        assert_eq!(code, 0);
        assert!(out.contains("in_regime"));
        assert!(out.contains("checks"));
    }
}
