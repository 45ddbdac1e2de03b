//! Approximate count of proper colourings, compared with the exact count.
//!
//! cargo run --release --example count -- fixtures/path5.hg 0.1

use chromatic_lll::counter::count;
use chromatic_lll::oracle::exact_count;
use chromatic_lll::params::{derive, Mode, Overrides};
use chromatic_lll::Instance;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/chain.hg").into());
    let eps: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0.2);
    let inst = Instance::parse(&std::fs::read_to_string(&path)?)?;

    let derived = derive(&inst, eps, Mode::Counting, Overrides::default());
    for w in &derived.warnings {
        eprintln!("warning: {w}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let est = count(&inst, eps, &derived.params, &mut rng)?;
    let exact = exact_count(&inst)?;

    println!("instance   {path}");
    println!("estimate   {:.3} (ln {:.4})", est.log_estimate.exp(), est.log_estimate);
    println!("exact      {exact}");
    let err = (est.log_estimate - exact.to_string().parse::<f64>()?.ln()).abs();
    println!("log error  {err:.4} (target {eps})");
    println!("steps      {}", est.steps.len());
    Ok(())
}
