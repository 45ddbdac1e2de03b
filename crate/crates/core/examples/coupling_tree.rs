//! The two-colour coupling: a few random runs, the full truncated tree, and
//! the ratio bracket the LP derives from it.

use chromatic_lll::coupling::tree::TreeConfig;
use chromatic_lll::coupling::{CouplingSimulator, CouplingTree};
use chromatic_lll::lp::{binary_search_ratio, RatioBracket};
use chromatic_lll::oracle::{exact_ratio, rational_to_f64, Oracle};
use chromatic_lll::Instance;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/path5.hg").into());
    let inst = Instance::parse(&std::fs::read_to_string(&path)?)?;
    let (v, c1, c2) = (0, 0, 1);

    let mut sim = CouplingSimulator::new(&inst, 1, 0, Oracle::default())?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..4 {
        let run = sim.run(v, c1, c2, &mut rng)?;
        println!("run {i}: {:?}", run.trace);
    }

    let cfg = TreeConfig { v, c1, c2, k1: 1, k2: 0, depth: 8, node_budget: 1_000_000 };
    let tree = CouplingTree::build(&inst, cfg)?;
    println!("\ntree: {:?}", tree.stats());

    let truth = rational_to_f64(&exact_ratio(&inst, v, c1, c2)?);
    let b = binary_search_ratio(&tree, RatioBracket::new(1e-3, 1e3, 0.0), 0.05, 5.0, 1e-9)?;
    println!("Pr[{c1}]/Pr[{c2}] at v{v} in [{:.4}, {:.4}], exact {truth:.4}", b.r_lo, b.r_hi);
    Ok(())
}
