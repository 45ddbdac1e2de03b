//! Draws samples and reports the empirical distance to uniform.
//!
//! cargo run --release --example sample -- fixtures/single_edge.hg 20000

use std::collections::HashMap;

use chromatic_lll::oracle::Oracle;
use chromatic_lll::params::{derive, Mode, Overrides};
use chromatic_lll::sampler::{Sampler, SamplerOptions};
use chromatic_lll::{Instance, PartialColouring};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/single_edge.hg").into());
    let n: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(20_000);
    let inst = Instance::parse(&std::fs::read_to_string(&path)?)?;
    let eps = 0.05;

    let params = derive(&inst, eps, Mode::Sampling, Overrides::default()).params;
    let mut sampler = Sampler::new(&inst, eps, params, SamplerOptions::default())?;
    let mut hist: HashMap<Vec<u32>, u64> = HashMap::new();
    let mut failed = 0;
    for seed in 0..n {
        let out = sampler.sample(seed)?;
        failed += out.failed as u64;
        *hist.entry(out.colouring).or_default() += 1;
    }

    // The exact support gives the uniform target.
    let support = Oracle::default().enumerate_with(&inst, &PartialColouring::blank(inst.n()))?;
    let u = 1.0 / support.len() as f64;
    let inside: f64 = support
        .iter()
        .map(|s| (*hist.get(s).unwrap_or(&0) as f64 / n as f64 - u).abs())
        .sum();
    let outside = n - support.iter().map(|s| hist.get(s).copied().unwrap_or(0)).sum::<u64>();
    let tv = (inside + outside as f64 / n as f64) / 2.0;

    println!("samples       {n}");
    println!("support       {}", support.len());
    println!("distinct      {}", hist.len());
    println!("failures      {failed}");
    println!("tv to uniform {tv:.4}");
    Ok(())
}
