//! Helpers shared by the integration tests: fixture loading and a naive
//! enumerator that shares no code with the library's oracle.

#![allow(dead_code)]

use std::collections::HashMap;
use std::path::PathBuf;

use chromatic_lll::{Colour, Instance};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn fixture(name: &str) -> Instance {
    let text = std::fs::read_to_string(fixture_path(name)).expect("fixture exists");
    Instance::parse(&text).expect("fixture parses")
}

/// Proper under the glossary definition: every edge sees at least two
/// colours among its vertices and its pinned colours.
pub fn naive_proper(inst: &Instance, sigma: &[Colour]) -> bool {
    inst.edges().iter().all(|e| {
        let mut seen: Vec<Colour> = e.pinned().to_vec();
        seen.extend(e.vertices().iter().map(|&v| sigma[v]));
        seen.sort_unstable();
        seen.dedup();
        seen.len() > 1
    })
}

/// Every colouring in lexicographic order, filtered by `keep`.
pub fn naive_colourings(inst: &Instance, keep: impl Fn(&[Colour]) -> bool) -> Vec<Vec<Colour>> {
    let n = inst.n();
    let q = inst.q();
    let mut out = Vec::new();
    let mut sigma = vec![0 as Colour; n];
    loop {
        if naive_proper(inst, &sigma) && keep(&sigma) {
            out.push(sigma.clone());
        }
        let mut i = n;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            sigma[i] += 1;
            if sigma[i] < q {
                break;
            }
            sigma[i] = 0;
        }
    }
}

pub fn naive_count(inst: &Instance) -> u64 {
    naive_colourings(inst, |_| true).len() as u64
}

/// Total variation distance between an empirical histogram and the uniform
/// distribution on `support`. Mass outside the support counts in full.
pub fn tv_to_uniform(hist: &HashMap<Vec<Colour>, usize>, support: &[Vec<Colour>]) -> f64 {
    let total: usize = hist.values().sum();
    let u = 1.0 / support.len() as f64;
    let mut tv = 0.0;
    for s in support {
        let p = *hist.get(s).unwrap_or(&0) as f64 / total as f64;
        tv += (p - u).abs();
    }
    let outside: usize = hist
        .iter()
        .filter(|(k, _)| !support.contains(k))
        .map(|(_, v)| *v)
        .sum();
    tv += outside as f64 / total as f64;
    tv / 2.0
}
