//! Connected sets and {2,3}-trees in a line graph, against their growth bounds.

use chromatic_lll::graphtools::{connected_set_bound, connected_sets, enumerate_23trees, line_graph, tree23_bound};
use chromatic_lll::Instance;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // A 3-uniform path with 8 edges: consecutive edges share two vertices.
    let edges: Vec<Vec<usize>> = (0..8).map(|i| vec![i, i + 1, i + 2]).collect();
    let inst = Instance::new(10, 3, edges)?;
    let g = line_graph(&inst);
    let d = g.max_degree();
    println!("line graph: {} nodes, max degree {d}", inst.num_edges());

    // At size 1 the bound is 1/2 while the count is 1; it only bites from size 2.
    for ell in 1..=5 {
        let sets = connected_sets(&g, 0, ell, 1_000_000)?.len();
        let trees = enumerate_23trees(&g, 0, ell, 1_000_000)?.len();
        println!(
            "size {ell}: {sets:>4} connected sets (bound {:>8.1}), {trees:>3} {{2,3}}-trees (bound {:>10.1})",
            connected_set_bound(d, ell),
            tree23_bound(d, ell)
        );
    }
    Ok(())
}
