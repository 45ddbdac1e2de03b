//! One marginal estimate through the coupling tree and the LP bracket.
//!
//! cargo run --release --example marginal -- fixtures/pinned_single_edge.hg 0 0

use chromatic_lll::lp::estimate_marginal;
use chromatic_lll::oracle::{exact_marginal, rational_to_f64};
use chromatic_lll::params::{derive, Mode, Overrides};
use chromatic_lll::Instance;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/pinned_single_edge.hg").into());
    let v: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    let c: u32 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    let inst = Instance::parse(&std::fs::read_to_string(&path)?)?;
    let eps = 0.05;

    let params = derive(&inst, eps, Mode::Counting, Overrides::default()).params;
    let est = estimate_marginal(&inst, v, c, eps, &params)?;
    let truth = rational_to_f64(&exact_marginal(&inst, v, c)?);

    println!("Pr[v{v} = {c}] ~ {:.5}  (exact {truth:.5})", est.p_hat);
    println!("gamma {:.3e}, {} tree nodes, {} LP rows", est.gamma, est.tree_nodes, est.lp_constraints);
    for b in &est.brackets {
        println!(
            "  colour {}: ratio {:.5} in [{:.5}, {:.5}]",
            b.colour, b.ratio, b.bracket.r_lo, b.bracket.r_hi
        );
    }
    Ok(())
}
