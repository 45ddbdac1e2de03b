//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails or overruns its time budget.
//!
//! Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test --test acceptance -- 4 7`.

mod common;

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use chromatic_lll::counter::{count_with, CountOptions};
use chromatic_lll::coupling::tree::TreeConfig;
use chromatic_lll::coupling::{Coupler, CouplingSimulator, CouplingTree, NodeStatus};
use chromatic_lll::graphtools::{
    connected_set_bound, connected_sets, enumerate_23trees, greedy_23tree, is_23tree, line_graph,
    tree23_bound, SimpleGraph, DEFAULT_ENUM_BUDGET,
};
use chromatic_lll::lll::{check_lll, marginal_bounds_exact, LllCheckConfig};
use chromatic_lll::lp::{
    binary_search_ratio, estimate_marginal, generate_lp_exact, truth_point, truth_values, Family,
    RatioBracket, DEFAULT_TOL,
};
use chromatic_lll::oracle::{rational_to_f64, Oracle};
use chromatic_lll::params::{
    block_checks, derive, headline_threshold, settle_counting, settle_sampling, AlgoParams, Mode,
    Overrides, Settled,
};
use chromatic_lll::sampler::{Sampler, SamplerOptions};
use chromatic_lll::{Colour, Instance, PartialColouring};
use common::{fixture, fixture_path, naive_colourings, naive_count, tv_to_uniform};
use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{Pow, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn main() {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let all = [
        Criterion { id: 1, name: "parameter settlement", budget: secs(1), run: c1_settlement },
        Criterion { id: 2, name: "oracle closed forms", budget: secs(10), run: c2_oracle },
        Criterion { id: 3, name: "marginal bounds under the local lemma", budget: secs(30), run: c3_bounds },
        Criterion { id: 4, name: "pre-Gibbs coupling", budget: secs(120), run: c4_pre_gibbs },
        Criterion { id: 5, name: "leaf-ratio exactness", budget: secs(120), run: c5_leaf_ratio },
        Criterion { id: 6, name: "LP truth feasibility", budget: secs(120), run: c6_truth },
        Criterion { id: 7, name: "bracket soundness", budget: secs(300), run: c7_brackets },
        Criterion { id: 8, name: "marginal estimator", budget: secs(600), run: c8_estimator },
        Criterion { id: 9, name: "approximate counting", budget: secs(900), run: c9_counting },
        Criterion { id: 10, name: "sampler total variation", budget: secs(900), run: c10_sampler },
        Criterion { id: 11, name: "combinatorial bounds", budget: secs(300), run: c11_combinatorics },
        Criterion { id: 12, name: "determinism", budget: secs(300), run: c12_determinism },
    ];
    let mut failed = 0;
    for c in all.iter().filter(|c| wanted.is_empty() || wanted.contains(&c.id)) {
        let t0 = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let took = t0.elapsed();
        let over = took > c.budget;
        let (tag, detail) = match (&res, over) {
            (Ok(d), false) => ("PASS", d.clone()),
            (Ok(d), true) => ("FAIL", format!("{d}; over time budget")),
            (Err(e), _) => ("FAIL", e.clone()),
        };
        if tag == "FAIL" {
            failed += 1;
        }
        println!(
            "{tag} [{:>2}] {} ({:.1}s of {}s): {detail}",
            c.id,
            c.name,
            took.as_secs_f64(),
            c.budget.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn rat(n: u64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

fn counting_params(inst: &Instance, eps: f64) -> AlgoParams {
    derive(inst, eps, Mode::Counting, Overrides::default()).params
}

// 1 -------------------------------------------------------------------------

fn c1_settlement() -> Outcome {
    let half = 0.5;
    ensure!(
        settle_counting(28) == Settled { k1: 26, k2: 12, beta: half },
        "settle_counting(28) = {:?}",
        settle_counting(28)
    );
    ensure!(
        settle_sampling(28) == Settled { k1: 22, k2: 10, beta: half },
        "settle_sampling(28) = {:?}",
        settle_sampling(28)
    );
    let mut checked = 0;
    for k in 28..=200usize {
        for delta in [1usize, 2, 3, 10, 100, 1000, 1_000_000] {
            for (mode, c) in [(Mode::Counting, 357.0), (Mode::Sampling, 931.0)] {
                // Smallest q above the headline threshold.
                let q = headline_threshold(k, delta, mode).floor() as u64 + 1;
                for chk in block_checks(k, delta, q, mode, c) {
                    ensure!(chk.pass, "k={k} delta={delta} q={q} {mode:?}: `{}` fails ({} vs {})", chk.name, chk.lhs, chk.rhs);
                    checked += 1;
                }
            }
        }
    }
    Ok(format!("{checked} inequalities hold for k in [28, 200]"))
}

// 2 -------------------------------------------------------------------------

fn c2_oracle() -> Outcome {
    let oracle = Oracle::default();
    let mut cases = 0;
    let mut check = |inst: &Instance, want: BigUint, what: &str| -> Result<(), String> {
        let got = oracle.count(inst).map_err(|e| e.to_string())?;
        ensure!(got == want, "{what}: oracle {got}, closed form {want}");
        cases += 1;
        Ok(())
    };
    let pow = |q: u32, e: usize| BigUint::from(q).pow(e as u32);
    for (n, q) in [(1usize, 1u32), (5, 2), (9, 3), (16, 3), (12, 4)] {
        check(&Instance::new(n, q, vec![]).unwrap(), pow(q, n), "no edges")?;
    }
    for (n, k, q) in [(3usize, 3usize, 2u32), (3, 3, 3), (6, 3, 3), (10, 4, 3), (16, 5, 2), (7, 2, 4)] {
        let inst = Instance::new(n, q, vec![(0..k).collect()]).unwrap();
        let want = (pow(q, k) - BigUint::from(q)) * pow(q, n - k);
        check(&inst, want, "single edge")?;
    }
    for (m, k, q, extra) in [(2usize, 3usize, 3u32, 1usize), (3, 3, 2, 4), (4, 4, 2, 0), (2, 5, 3, 3)] {
        let edges: Vec<Vec<usize>> = (0..m).map(|i| (i * k..(i + 1) * k).collect()).collect();
        let n = m * k + extra;
        let inst = Instance::new(n, q, edges).unwrap();
        let want = (pow(q, k) - BigUint::from(q)).pow(m as u32) * pow(q, extra);
        check(&inst, want, "disjoint edges")?;
    }
    // Disjoint unions of random blocks; each block counted by naive
    // enumeration.
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for trial in 0..10 {
        let q: u32 = rng.gen_range(2..=3);
        let mut edges = Vec::new();
        let mut blocks = Vec::new();
        let mut base = 0;
        for _ in 0..rng.gen_range(2..=3) {
            let size = rng.gen_range(3..=5);
            let mut local = Vec::new();
            for _ in 0..rng.gen_range(1..=3) {
                let k = rng.gen_range(2..=size.min(4));
                let mut e = rand::seq::index::sample(&mut rng, size, k).into_vec();
                e.sort_unstable();
                local.push(e);
            }
            let block = Instance::new(size, q, local.clone()).unwrap();
            blocks.push(naive_count(&block));
            edges.extend(local.into_iter().map(|e| e.into_iter().map(|v| v + base).collect::<Vec<_>>()));
            base += size;
        }
        let free = rng.gen_range(0..=2);
        let n = base + free;
        ensure!(n <= 16, "generated instance too large");
        let inst = Instance::new(n, q, edges).unwrap();
        let want = blocks.iter().fold(pow(q, free), |acc, &b| acc * BigUint::from(b));
        check(&inst, want, &format!("component product #{trial}"))?;
    }
    ensure!(cases >= 20, "only {cases} instances");
    Ok(format!("{cases} instances match exactly"))
}

// 3 -------------------------------------------------------------------------

fn c3_bounds() -> Outcome {
    let oracle = Oracle::default();
    let mut insts: Vec<(String, Instance)> = [
        "single_edge.hg",
        "single_edge_q2.hg",
        "pinned_single_edge.hg",
        "chain.hg",
        "chain5.hg",
        "path5.hg",
        "star.hg",
        "disjoint.hg",
        "k4_pair.hg",
        "k4_single.hg",
        "mixed_pins.hg",
    ]
    .iter()
    .map(|f| (f.to_string(), fixture(f)))
    .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 0..12 {
        let q = rng.gen_range(4..=8);
        let k = rng.gen_range(3..=4);
        let n = rng.gen_range(k + 2..=8);
        let m = rng.gen_range(2..=4);
        let edges: Vec<Vec<usize>> = (0..m)
            .map(|_| {
                let mut e = rand::seq::index::sample(&mut rng, n, k).into_vec();
                e.sort_unstable();
                e
            })
            .collect();
        insts.push((format!("random #{i}"), Instance::new(n, q, edges).unwrap()));
    }
    let ts: [(u64, u64); 6] = [(3, 2), (2, 1), (3, 1), (5, 1), (10, 1), (20, 1)];
    let mut applicable = 0;
    let mut marginals = 0;
    for (name, inst) in &insts {
        let mut table = None;
        for &(tn, td) in &ts {
            let t = BigRational::new(BigInt::from(tn), BigInt::from(td));
            for kp in 2..=inst.k_min().max(2) {
                let cfg = LllCheckConfig {
                    t: tn as f64 / td as f64,
                    k_prime: kp,
                };
                if !check_lll(inst, cfg).map_err(|e| e.to_string())? {
                    continue;
                }
                applicable += 1;
                let bounds = marginal_bounds_exact(inst.q(), &t);
                if table.is_none() {
                    let ex = oracle.exact(inst).map_err(|e| e.to_string())?;
                    table = Some(ex.marginals.ok_or(format!("{name} has no proper colouring"))?);
                }
                for (v, row) in table.iter().flatten().enumerate() {
                    for (c, p) in row.iter().enumerate() {
                        ensure!(bounds.contains(p), "{name}: t={t} k'={kp}: Pr[v{v}={c}] = {p} outside bounds");
                        marginals += 1;
                    }
                }
            }
        }
    }
    ensure!(applicable >= 10, "only {applicable} (instance, t, k') combinations pass the check");
    Ok(format!("{applicable} applicable (instance, t, k') cases, {marginals} marginals inside bounds"))
}

// 4 -------------------------------------------------------------------------

fn c4_pre_gibbs() -> Outcome {
    const RUNS: usize = 100_000;
    let mut worst: f64 = 0.0;
    let mut lines = Vec::new();
    let cases = [
        ("single_edge.hg", 0usize, 0, 1, 1usize, 0usize),
        ("single_edge.hg", 0, 0, 1, 2, 1),
        ("chain.hg", 0, 0, 1, 1, 0),
        ("chain.hg", 1, 2, 0, 2, 1),
    ];
    for (file, v, c1, c2, k1, k2) in cases {
        let inst = fixture(file);
        let support = naive_colourings(&inst, |s| s[v] == c1);
        let mut sim = CouplingSimulator::new(&inst, k1, k2, Oracle::default()).map_err(|e| e.to_string())?;
        let mut completions: HashMap<PartialColouring, chromatic_lll::oracle::ExactSampler> = HashMap::new();
        let mut hist: HashMap<Vec<Colour>, usize> = HashMap::new();
        for i in 0..RUNS {
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            rng.set_stream(i as u64);
            let run = sim.run(v, c1, c2, &mut rng).map_err(|e| e.to_string())?;
            let x = run.state.x;
            if !completions.contains_key(&x) {
                let s = chromatic_lll::oracle::ExactSampler::with_fixed(&inst, &x, &Oracle::default())
                    .map_err(|e| e.to_string())?;
                completions.insert(x.clone(), s);
            }
            let full = completions[&x].sample(&mut rng);
            *hist.entry(full).or_default() += 1;
        }
        let tv = tv_to_uniform(&hist, &support);
        worst = worst.max(tv);
        lines.push(format!("{file} v{v} ({c1},{c2}) k1={k1} k2={k2}: TV {tv:.4}"));
        ensure!(tv <= 0.02, "{}", lines.join("; "));
    }
    Ok(format!("worst TV {worst:.4} over {RUNS} runs each [{}]", lines.join("; ")))
}

// 5 -------------------------------------------------------------------------

fn c5_leaf_ratio() -> Outcome {
    let oracle = Oracle::default();
    let files = [
        "single_edge.hg",
        "single_edge_q2.hg",
        "pinned_single_edge.hg",
        "chain.hg",
        "chain5.hg",
        "path5.hg",
        "k4_single.hg",
        "mixed_pins.hg",
        "chain_q2.hg",
        "star.hg",
    ];
    let mut leaves = 0;
    let mut trees = 0;
    for file in files {
        let inst = fixture(file);
        for v in [0, inst.n() / 2] {
            for (k1, k2) in [(1, 0), (2, 1)] {
                let tree = CouplingTree::build(
                    &inst,
                    TreeConfig { v, c1: 0, c2: 1, k1, k2, depth: 6, node_budget: 2_000_000 },
                )
                .map_err(|e| format!("{file}: {e}"))?;
                trees += 1;
                let coupler = Coupler::new(&inst, k2);
                for (id, node) in tree.nodes.iter().enumerate() {
                    let NodeStatus::Halted { leaf } = node.status else { continue };
                    let s = tree.replay(&inst, id).map_err(|e| e.to_string())?;
                    let cx = oracle.count_with(&inst, &s.x).map_err(|e| e.to_string())?;
                    let cy = oracle.count_with(&inst, &s.y).map_err(|e| e.to_string())?;
                    let l = &tree.leaves[leaf];
                    let ctx = format!("{file} v{v} k1={k1} k2={k2} node {id}");
                    ensure!(l.nx.is_zero() == cx.is_zero(), "{ctx}: Nx={} but |C_x|={cx}", l.nx);
                    ensure!(l.ny.is_zero() == cy.is_zero(), "{ctx}: Ny={} but |C_y|={cy}", l.ny);
                    ensure!(&l.nx * &cy == &l.ny * &cx, "{ctx}: Nx/Ny = {}/{} but |C_x|/|C_y| = {cx}/{cy}", l.nx, l.ny);
                    if !cy.is_zero() {
                        let r = coupler.leaf_ratio(&s).map_err(|e| e.to_string())?;
                        ensure!(r == BigRational::new(BigInt::from(cx), BigInt::from(cy)), "{ctx}: leaf_ratio {r}");
                    }
                    leaves += 1;
                }
            }
        }
    }
    ensure!(leaves > 0, "no halted leaves");
    Ok(format!("{leaves} halted leaves over {trees} trees agree exactly"))
}

// 6 -------------------------------------------------------------------------

/// Whether every conditional marginal met at an internal node, on either
/// side, lies in the marginal bounds for `t`.
fn conditionals_in_bounds(inst: &Instance, tree: &CouplingTree, t: &BigRational) -> Result<bool, String> {
    let oracle = Oracle::default();
    let bounds = marginal_bounds_exact(inst.q(), t);
    for (id, node) in tree.nodes.iter().enumerate() {
        let NodeStatus::Internal { u, .. } = node.status else { continue };
        let s = tree.replay(inst, id).map_err(|e| e.to_string())?;
        for side in [&s.x, &s.y] {
            let total = oracle.count_with(inst, side).map_err(|e| e.to_string())?;
            if total.is_zero() {
                continue;
            }
            let mut z = side.clone();
            for c in 0..inst.q() {
                z.set(u, c);
                let part = oracle.count_with(inst, &z).map_err(|e| e.to_string())?;
                if !bounds.contains(&BigRational::new(part.into(), total.clone().into())) {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

fn c6_truth() -> Outcome {
    let oracle = Oracle::default();
    let mut cases: Vec<(String, Instance, usize, usize)> = Vec::new();
    for f in [
        "single_edge.hg",
        "single_edge_q2.hg",
        "pinned_single_edge.hg",
        "chain.hg",
        "chain5.hg",
        "path5.hg",
        "k4_single.hg",
        "k4_pair.hg",
        "mixed_pins.hg",
        "chain_q2.hg",
    ] {
        let inst = fixture(f);
        cases.push((f.into(), inst.clone(), 1, 0));
        if inst.k_min() >= 3 {
            cases.push((f.into(), inst, 3, 2));
        }
    }
    // Larger palettes keep the conditionals close to uniform.
    for (q, edges, n) in [
        (5u32, vec![vec![0, 1, 2]], 3usize),
        (6, vec![vec![0, 1, 2], vec![1, 2, 3]], 4),
        (5, vec![vec![0, 1, 2, 3], vec![2, 3, 4, 5]], 6),
        (7, vec![vec![0, 1, 2], vec![2, 3, 4]], 5),
    ] {
        let inst = Instance::new(n, q, edges).unwrap();
        cases.push((format!("q{q} n{n}"), inst, 3, 2));
    }
    let mut trees = 0;
    let mut with_caps = 0;
    for (name, inst, k1, k2) in &cases {
        let (c1, c2) = (0, 1);
        let tree = CouplingTree::build(
            inst,
            TreeConfig { v: 0, c1, c2, k1: *k1, k2: *k2, depth: 12, node_budget: 2_000_000 },
        )
        .map_err(|e| format!("{name}: {e}"))?;
        let r = match oracle.ratio(inst, 0, c1, c2) {
            Ok(r) => r,
            Err(_) => continue,
        };
        let point = truth_point(&truth_values(inst, &tree, &oracle).map_err(|e| e.to_string())?);
        for t in [rat(5), rat(20)] {
            let sys = generate_lp_exact(&tree, &r, &r, &t).map_err(|e| e.to_string())?;
            ensure!(
                sys.satisfied_exact_in(&point, &[Family::Ratio, Family::Mass]),
                "{name} k1={k1} k2={k2}: true values violate the ratio or mass constraints"
            );
            if conditionals_in_bounds(inst, &tree, &t)? {
                ensure!(
                    sys.satisfied_exact_in(&point, &[Family::Cap]),
                    "{name} k1={k1} k2={k2} t*={t}: conditionals inside the bounds but caps violated"
                );
                with_caps += 1;
            }
        }
        trees += 1;
    }
    ensure!(trees >= 10, "only {trees} trees");
    ensure!(with_caps >= 3, "caps exercised on only {with_caps} (tree, t*) pairs");
    Ok(format!("{trees} trees satisfy ratio and mass rows exactly; caps checked and satisfied on {with_caps} (tree, t*) pairs"))
}

// 7 -------------------------------------------------------------------------

fn c7_brackets() -> Outcome {
    let oracle = Oracle::default();
    let target = 1.1f64.ln();
    let cases = [
        ("single_edge.hg", 0usize, 0, 1),
        ("single_edge_q2.hg", 1, 1, 0),
        ("pinned_single_edge.hg", 0, 0, 1),
        ("pinned_single_edge.hg", 1, 1, 0),
        ("chain.hg", 0, 0, 1),
        ("chain.hg", 1, 2, 1),
        ("k4_single.hg", 0, 0, 2),
        ("mixed_pins.hg", 2, 2, 0),
        ("mixed_pins.hg", 0, 1, 2),
    ];
    let mut lines = Vec::new();
    let mut saw_one = false;
    let mut saw_three_quarters = false;
    for (file, v, c1, c2) in cases {
        let inst = fixture(file);
        let p = counting_params(&inst, 0.1);
        let tree = CouplingTree::build(
            &inst,
            TreeConfig { v, c1, c2, k1: p.k1, k2: p.k2, depth: p.depth, node_budget: 2_000_000 },
        )
        .map_err(|e| e.to_string())?;
        let st = tree.stats();
        ensure!(st.truncated == 0 && st.halted_below_cap == st.halted, "{file}: tree does not halt below L");
        let truth = rational_to_f64(&oracle.ratio(&inst, v, c1, c2).map_err(|e| e.to_string())?);
        saw_one |= truth == 1.0;
        saw_three_quarters |= (truth - 0.75).abs() < 1e-15;
        let b = binary_search_ratio(&tree, RatioBracket::new(1e-6, 1e6, p.gamma), target, p.t_star, DEFAULT_TOL)
            .map_err(|e| format!("{file}: {e}"))?;
        ensure!(b.width() <= target + 1e-9, "{file}: width {}", b.width());
        ensure!(b.contains(truth), "{file} v{v} ({c1},{c2}): [{}, {}] e^±{} misses {truth}", b.r_lo, b.r_hi, b.gamma);
        lines.push(format!("{file} r={truth:.4} in [{:.4}, {:.4}]", b.r_lo, b.r_hi));
    }
    ensure!(saw_one && saw_three_quarters, "ratios 1 and 3/4 not both covered");
    Ok(lines.join("; "))
}

// 8 -------------------------------------------------------------------------

fn c8_estimator() -> Outcome {
    let oracle = Oracle::default();
    let mut lines = Vec::new();
    let cases = [
        ("pinned_single_edge.hg", 0usize, 0, 0.1),
        ("single_edge.hg", 0, 0, 0.05),
        ("single_edge_q2.hg", 2, 1, 0.05),
        ("chain.hg", 0, 0, 0.05),
        ("chain.hg", 1, 2, 0.05),
        ("k4_single.hg", 3, 1, 0.05),
        ("chain5.hg", 2, 0, 0.05),
    ];
    for (file, v, c, tol) in cases {
        let inst = fixture(file);
        let truth = rational_to_f64(&oracle.marginal(&inst, v, c).map_err(|e| e.to_string())?);
        if tol < 0.1 {
            ensure!((truth - 1.0 / inst.q() as f64).abs() < 1e-15, "{file} is not symmetric");
        }
        let p = counting_params(&inst, tol);
        let est = estimate_marginal(&inst, v, c, tol, &p).map_err(|e| format!("{file}: {e}"))?;
        let err = (est.p_hat.ln() - truth.ln()).abs();
        ensure!(err <= tol, "{file} v{v} c{c}: p_hat {} vs {truth}, |ln err| {err:.4} > {tol}", est.p_hat);
        lines.push(format!("{file} v{v}: {:.4} vs {truth:.4} (err {err:.4} <= {tol})", est.p_hat));
    }
    Ok(lines.join("; "))
}

// 9 -------------------------------------------------------------------------

fn c9_counting() -> Outcome {
    let oracle = Oracle::default();
    let files = [
        "single_edge.hg",
        "single_edge_q2.hg",
        "chain.hg",
        "chain5.hg",
        "path5.hg",
        "disjoint.hg",
        "chain_q2.hg",
        "mixed_pins.hg",
    ];
    let eps = 0.2;
    let mut lines = Vec::new();
    for file in files {
        let inst = fixture(file);
        ensure!(inst.n() <= 10 && inst.q() <= 3 && inst.edges().iter().all(|e| e.len() == 3), "{file} outside the suite's shape");
        let z = oracle.count(&inst).map_err(|e| e.to_string())?;
        let ln_z = z.to_f64().unwrap().ln();
        let p = counting_params(&inst, eps);
        let est = count_with(&inst, eps, &p, &mut ChaCha8Rng::seed_from_u64(9), &CountOptions::default())
            .map_err(|e| format!("{file}: {e}"))?;
        let err = (est.log_estimate - ln_z).abs();
        ensure!(err <= 0.2, "{file}: ln estimate {:.4} vs ln Z {ln_z:.4}", est.log_estimate);
        let exact_opts = CountOptions { oracle_marginals: true, ..CountOptions::default() };
        let ex = count_with(&inst, eps, &p, &mut ChaCha8Rng::seed_from_u64(9), &exact_opts)
            .map_err(|e| format!("{file}: {e}"))?;
        ensure!(ex.exact.as_deref() == Some(z.to_string().as_str()), "{file}: oracle mode gives {:?}, want {z}", ex.exact);
        lines.push(format!("{file}: Z={z} est={:.2} err={err:.4}", est.log_estimate.exp()));
    }
    Ok(lines.join("; "))
}

// 10 ------------------------------------------------------------------------

fn c10_sampler() -> Outcome {
    const SAMPLES: usize = 100_000;
    let inst = fixture("single_edge.hg");
    let eps = 0.05;
    let params = derive(&inst, eps, Mode::Sampling, Overrides::default()).params;
    let mut s = Sampler::new(&inst, eps, params, SamplerOptions::default()).map_err(|e| e.to_string())?;
    let mut hist: HashMap<Vec<Colour>, usize> = HashMap::new();
    let mut failures = 0;
    for i in 0..SAMPLES {
        let out = s.sample(i as u64).map_err(|e| e.to_string())?;
        if out.failed {
            failures += 1;
        }
        ensure!(inst.is_proper(&out.colouring), "improper sample {:?}", out.colouring);
        *hist.entry(out.colouring).or_default() += 1;
    }
    let support = naive_colourings(&inst, |_| true);
    let tv = tv_to_uniform(&hist, &support);
    let rate = failures as f64 / SAMPLES as f64;
    ensure!(tv <= 0.05, "TV {tv:.4}");
    ensure!(rate <= 0.05, "failure rate {rate:.4}");
    Ok(format!("TV {tv:.4} over {SAMPLES} samples, failure rate {rate:.4}"))
}

// 11 ------------------------------------------------------------------------

fn bfs(g: &[Vec<usize>], src: usize) -> Vec<usize> {
    let mut d = vec![usize::MAX; g.len()];
    d[src] = 0;
    let mut queue = std::collections::VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        for &w in &g[u] {
            if d[w] == usize::MAX {
                d[w] = d[u] + 1;
                queue.push_back(w);
            }
        }
    }
    d
}

fn connected_under(set: &[usize], linked: impl Fn(usize, usize) -> bool) -> bool {
    let mut seen = vec![false; set.len()];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for j in 0..set.len() {
            if !seen[j] && linked(set[i], set[j]) {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen.iter().all(|&b| b)
}

/// Subsets of `0..n` of the given size that contain `root`.
fn subsets_with(n: usize, root: usize, size: usize) -> Vec<Vec<usize>> {
    let others: Vec<usize> = (0..n).filter(|&u| u != root).collect();
    let mut out = Vec::new();
    let mut pick = Vec::new();
    fn rec(o: &[usize], start: usize, left: usize, pick: &mut Vec<usize>, out: &mut Vec<Vec<usize>>, root: usize) {
        if left == 0 {
            let mut s = pick.clone();
            s.push(root);
            s.sort_unstable();
            out.push(s);
            return;
        }
        for i in start..o.len() {
            pick.push(o[i]);
            rec(o, i + 1, left - 1, pick, out, root);
            pick.pop();
        }
    }
    if size >= 1 {
        rec(&others, 0, size - 1, &mut pick, &mut out, root);
    }
    out
}

fn c11_combinatorics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checks = 0;
    for gi in 0..50 {
        let n = rng.gen_range(8..=13);
        let dmax = rng.gen_range(1..=4);
        let mut adj = vec![Vec::new(); n];
        let mut pairs = Vec::new();
        for _ in 0..3 * n {
            let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
            if a != b && !adj[a].contains(&b) && adj[a].len() < dmax && adj[b].len() < dmax {
                adj[a].push(b);
                adj[b].push(a);
                pairs.push((a, b));
            }
        }
        let g = SimpleGraph::from_edges(n, &pairs);
        let d = g.max_degree();
        ensure!(d <= 4, "degree {d}");
        let dist: Vec<Vec<usize>> = (0..n).map(|u| bfs(&adj, u)).collect();
        for root in 0..n {
            for ell in 1..=5 {
                let subsets = subsets_with(n, root, ell);
                let want_conn = subsets
                    .iter()
                    .filter(|s| connected_under(s, |a, b| dist[a][b] == 1))
                    .count();
                let want_23 = subsets
                    .iter()
                    .filter(|s| {
                        s.iter().all(|&a| s.iter().all(|&b| a == b || dist[a][b] >= 2))
                            && connected_under(s, |a, b| (2..=3).contains(&dist[a][b]))
                    })
                    .count();
                let conn = connected_sets(&g, root, ell, DEFAULT_ENUM_BUDGET).map_err(|e| e.to_string())?;
                let t23 = enumerate_23trees(&g, root, ell, DEFAULT_ENUM_BUDGET).map_err(|e| e.to_string())?;
                ensure!(conn.len() == want_conn, "graph {gi} root {root} l={ell}: {} connected sets, brute force {want_conn}", conn.len());
                ensure!(t23.len() == want_23, "graph {gi} root {root} l={ell}: {} {{2,3}}-trees, brute force {want_23}", t23.len());
                if ell == 1 {
                    // The bounds read (ed)^0 / 2 = 1/2 here, below the
                    // one set {root}; the statement is for l >= 2.
                    ensure!(conn.len() == 1 && t23.len() == 1, "size-1 sets");
                } else {
                    ensure!(conn.len() as f64 <= connected_set_bound(d, ell), "graph {gi}: {} connected sets of size {ell} exceed the bound", conn.len());
                    ensure!(t23.len() as f64 <= tree23_bound(d, ell), "graph {gi}: {} {{2,3}}-trees of size {ell} exceed the bound", t23.len());
                }
                checks += 1;
            }
        }
    }

    // Blocked sets from coupling runs, at every step of every run.
    let mut instances: Vec<Instance> = ["chain.hg", "chain5.hg", "path5.hg", "star.hg", "k4_pair.hg", "chain_q2.hg"]
        .iter()
        .map(|f| fixture(f))
        .collect();
    for _ in 0..8 {
        let n = rng.gen_range(9..=13);
        let m = rng.gen_range(4..=7);
        let edges: Vec<Vec<usize>> = (0..m)
            .map(|_| {
                let mut e = rand::seq::index::sample(&mut rng, n, 3).into_vec();
                e.sort_unstable();
                e
            })
            .collect();
        instances.push(Instance::new(n, 3, edges).unwrap());
    }
    let mut sets = 0;
    let mut largest = 0;
    for inst in &instances {
        let lin = line_graph(inst);
        let k = inst.k_max();
        let delta = inst.delta();
        let v = inst.edge(0).vertices()[0];
        let e0 = (0..inst.num_edges()).find(|&e| inst.edge(e).contains(v)).unwrap();
        for (k1, k2) in [(1, 0), (2, 1)] {
            let mut sim = CouplingSimulator::new(inst, k1, k2, Oracle::default()).map_err(|e| e.to_string())?;
            let coupler = Coupler::new(inst, k2);
            for run in 0..40u64 {
                let mut r = ChaCha8Rng::seed_from_u64(run);
                let out = sim.run(v, 0, 1, &mut r).map_err(|e| e.to_string())?;
                let mut s = coupler.root(v, 0, 1).map_err(|e| e.to_string())?;
                let mut states = vec![s.clone()];
                for &(u, cx, cy) in &out.trace {
                    s = coupler.extend(&s, u, cx, cy).map_err(|e| e.to_string())?;
                    states.push(s.clone());
                }
                for st in &states {
                    let b = coupler.blocked_edges(st);
                    ensure!(b.contains(&e0), "e0 not blocked");
                    let t = greedy_23tree(&lin, &b, e0, k * (delta - 1)).map_err(|e| format!("blocked set {b:?}: {e}"))?;
                    ensure!(is_23tree(&lin, &t), "greedy output {t:?} is not a {{2,3}}-tree");
                    ensure!(t.iter().all(|e| b.contains(e)) && t.contains(&e0), "greedy output leaves B");
                    ensure!(t.len() * k * delta >= b.len(), "|T| = {} < |B|/(k delta) = {}/{}", t.len(), b.len(), k * delta);
                    largest = largest.max(b.len());
                    sets += 1;
                }
            }
        }
    }
    Ok(format!("{checks} (graph, root, size) counts match brute force and obey the bounds; {sets} blocked sets (largest {largest}) give large enough greedy trees"))
}

// 12 ------------------------------------------------------------------------

fn c12_determinism() -> Outcome {
    let fx = |f: &str| fixture_path(f).to_string_lossy().into_owned();
    let chain = fx("chain.hg");
    let single = fx("single_edge.hg");
    let pinned = fx("pinned_single_edge.hg");
    let path = fx("path5.hg");
    let k4 = fx("k4_pair.hg");
    let runs: Vec<Vec<String>> = vec![
        vec!["count", "--eps", "0.2", "--seed", "7", &chain],
        vec!["count", "--eps", "0.2", "--seed", "7", "--oracle-marginals", &chain],
        vec!["sample", "--eps", "0.1", "--samples", "50", "--seed", "3", &single],
        vec!["sample", "--eps", "0.1", "--samples", "50", "--seed", "3", "--histogram", &chain],
        vec!["marginal", "--vertex", "0", "--colour", "0", "--eps", "0.1", &pinned],
        vec!["oracle-count", &chain],
        vec!["oracle-marginal", &chain],
        vec!["oracle-sample", "--samples", "20", "--seed", "5", &chain],
        vec!["find-colouring", "--seed", "5", &path],
        vec!["base-colouring", "--k1c", "1", "--seed", "5", &k4],
        vec!["check-regime", "--k", "28", "--delta", "2", "--q", "715", "--mode", "counting"],
        vec!["couple-sim", "--vertex", "0", "--c1", "0", "--c2", "1", "--runs", "300", "--seed", "2", &chain],
        vec!["tree-dump", "--depth", "6", "--nodes", &chain],
        vec!["tree-stats", "--max-size", "3", &path],
        vec!["generate", "--kind", "random", "--n", "9", "--edges", "4", "--seed", "1"],
    ]
    .into_iter()
    .map(|v| v.into_iter().map(String::from).collect())
    .collect();
    let exe = env!("CARGO_BIN_EXE_chromatic-lll");
    let mut names = Vec::new();
    for args in &runs {
        let mut outputs = Vec::new();
        for threads in ["1", "1", "4"] {
            let out = Command::new(exe)
                .args(["--no-timing", "--threads", threads])
                .args(args)
                .output()
                .map_err(|e| e.to_string())?;
            ensure!(out.status.success(), "{} failed: {}", args[0], String::from_utf8_lossy(&out.stderr));
            outputs.push(out.stdout);
        }
        ensure!(outputs[0] == outputs[1], "{}: two runs differ", args[0]);
        ensure!(outputs[0] == outputs[2], "{}: output depends on thread count", args[0]);
        names.push(args[0].clone());
    }
    names.dedup();
    Ok(format!("{} invocations over {} subcommands are byte-identical across runs and thread counts", runs.len(), names.len()))
}
