//! Where the guarantees start: the smallest q in the regime for a few (k, Δ).

use chromatic_lll::params::{headline_threshold, regime_check, settle, Mode};

fn smallest_q(k: usize, delta: usize, mode: Mode) -> u64 {
    let mut q = headline_threshold(k, delta, mode).floor() as u64;
    while !regime_check(k, delta, q, mode).in_regime {
        q += 1;
    }
    q
}

fn main() {
    for mode in [Mode::Counting, Mode::Sampling] {
        println!("{mode:?}");
        for k in [28, 40, 80] {
            let s = settle(k, mode);
            for delta in [2, 100, 10_000] {
                println!(
                    "  k={k:<3} Δ={delta:<6} k1={:<2} k2={:<2} smallest q {}",
                    s.k1,
                    s.k2,
                    smallest_q(k, delta, mode)
                );
            }
        }
    }

    let report = regime_check(28, 2, 700, Mode::Counting);
    println!("\nk=28 Δ=2 q=700, failing checks:");
    for c in report.checks.iter().filter(|c| !c.pass) {
        println!("  {}", c.name);
    }
}
