//! Exact counts, marginal tables and uniform samples by enumeration.

use chromatic_lll::oracle::{rational_to_f64, Oracle};
use chromatic_lll::Instance;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/mixed_pins.hg").into());
    let inst = Instance::parse(&std::fs::read_to_string(&path)?)?;
    let oracle = Oracle::default();

    let ex = oracle.exact(&inst)?;
    println!("{} proper colourings of {} vertices, q = {}", ex.count, inst.n(), inst.q());
    if let Some(table) = &ex.marginals {
        for (v, row) in table.iter().enumerate() {
            let row: Vec<String> = row.iter().map(|p| format!("{:.4}", rational_to_f64(p))).collect();
            println!("  v{v}: {}", row.join(" "));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..3 {
        println!("sample {:?}", oracle.sample(&inst, &mut rng)?);
    }
    Ok(())
}
