//! Moser-Tardos: a proper colouring, then one whose edge prefixes are already
//! non-monochromatic (the starting point of the counter).

use chromatic_lll::lll::{good_base_colouring, moser_tardos};
use chromatic_lll::Instance;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // 6-uniform, 20 vertices, overlapping windows.
    let edges: Vec<Vec<usize>> = (0..15).map(|i| (i..i + 6).collect()).collect();
    let inst = Instance::new(20, 3, edges)?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);

    let sigma = moser_tardos(&inst, &mut rng, 100_000)?;
    println!("proper:        {sigma:?} ({})", inst.is_proper(&sigma));
    for k1 in 1..=3 {
        let base = good_base_colouring(&inst, k1, &mut rng, 100_000)?;
        println!("prefix k1c={k1}: {base:?}");
    }
    Ok(())
}
