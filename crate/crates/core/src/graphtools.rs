//! Line graphs, distance powers, {2,3}-trees and the bad-colouring test.
//!
//! A {2,3}-tree in a graph `G` is a node set whose members are pairwise at
//! distance at least 2 and which becomes connected once every pair at
//! distance 2 or 3 is joined.

use std::collections::VecDeque;

use thiserror::Error;

use crate::instance::{Colour, Instance};

pub const DEFAULT_ENUM_BUDGET: usize = 5_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("enumeration exceeded the budget of {0} sets")]
    BudgetExceeded(usize),
    #[error("candidate set is not connected in the square graph")]
    NotSquareConnected,
    #[error("anchor {0} is not in the candidate set")]
    AnchorMissing(usize),
    #[error("degree bound {bound} is below the actual degree {actual}")]
    DegreeBound { bound: usize, actual: usize },
    #[error("vertex {0} lies in no edge")]
    IsolatedVertex(usize),
    #[error("node {0} out of range")]
    NodeOutOfRange(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimpleGraph {
    adj: Vec<Vec<usize>>,
}

impl SimpleGraph {
    /// Builds a graph from an edge list; loops and repeats are ignored.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a != b {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        for l in &mut adj {
            l.sort_unstable();
            l.dedup();
        }
        SimpleGraph { adj }
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn neighbours(&self, u: usize) -> &[usize] {
        &self.adj[u]
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.adj[a].binary_search(&b).is_ok()
    }

    pub fn max_degree(&self) -> usize {
        self.adj.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Breadth-first distances from `src`; `usize::MAX` marks unreachable.
    pub fn bfs(&self, src: usize) -> Vec<usize> {
        self.multi_bfs(&[src], usize::MAX)
    }

    /// Distances from the nearest node of `srcs`, explored up to `limit`.
    pub fn multi_bfs(&self, srcs: &[usize], limit: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.len()];
        let mut queue = VecDeque::new();
        for &s in srcs {
            if dist[s] != 0 {
                dist[s] = 0;
                queue.push_back(s);
            }
        }
        while let Some(u) = queue.pop_front() {
            if dist[u] >= limit {
                continue;
            }
            for &w in &self.adj[u] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    pub fn all_distances(&self) -> Vec<Vec<usize>> {
        (0..self.len()).map(|u| self.bfs(u)).collect()
    }

    /// Graph joining pairs whose distance lies in `lo..=hi`.
    pub fn distance_band(&self, lo: usize, hi: usize) -> SimpleGraph {
        let mut adj = vec![Vec::new(); self.len()];
        for (u, row) in adj.iter_mut().enumerate() {
            let d = self.multi_bfs(&[u], hi);
            for (w, &dw) in d.iter().enumerate() {
                if w != u && dw >= lo && dw <= hi {
                    row.push(w);
                }
            }
        }
        SimpleGraph { adj }
    }

    /// Pairs at distance at most 2.
    pub fn square(&self) -> SimpleGraph {
        self.distance_band(1, 2)
    }

    /// Whether `set` induces a connected subgraph.
    pub fn is_connected_set(&self, set: &[usize]) -> bool {
        let mut nodes = set.to_vec();
        nodes.sort_unstable();
        nodes.dedup();
        if nodes.is_empty() {
            return true;
        }
        let mut inside = vec![false; self.len()];
        for &u in &nodes {
            inside[u] = true;
        }
        let mut seen = vec![false; self.len()];
        let mut stack = vec![nodes[0]];
        seen[nodes[0]] = true;
        let mut reached = 1;
        while let Some(u) = stack.pop() {
            for &w in &self.adj[u] {
                if inside[w] && !seen[w] {
                    seen[w] = true;
                    reached += 1;
                    stack.push(w);
                }
            }
        }
        reached == nodes.len()
    }
}

/// Node `i` is edge `i`; two nodes are adjacent when the edges intersect.
pub fn line_graph(inst: &Instance) -> SimpleGraph {
    let inc = inst.incidence();
    let mut pairs = Vec::new();
    for list in &inc {
        for (i, &a) in list.iter().enumerate() {
            for &b in &list[i + 1..] {
                pairs.push((a, b));
            }
        }
    }
    SimpleGraph::from_edges(inst.num_edges(), &pairs)
}

/// All connected node sets of the given size containing `root`, each once.
pub fn connected_sets(
    g: &SimpleGraph,
    root: usize,
    size: usize,
    budget: usize,
) -> Result<Vec<Vec<usize>>, GraphError> {
    connected_sets_filtered(g, root, size, budget, |_, _| true)
}

/// As [`connected_sets`], but a candidate `w` is only added to a partial set
/// `s` when `allow(s, w)` holds. `allow` must be hereditary.
fn connected_sets_filtered(
    g: &SimpleGraph,
    root: usize,
    size: usize,
    budget: usize,
    allow: impl Fn(&[usize], usize) -> bool,
) -> Result<Vec<Vec<usize>>, GraphError> {
    if root >= g.len() {
        return Err(GraphError::NodeOutOfRange(root));
    }
    let mut out = Vec::new();
    if size == 0 {
        return Ok(out);
    }
    let mut blocked = vec![false; g.len()];
    blocked[root] = true;
    let cand: Vec<usize> = g.neighbours(root).to_vec();
    for &c in &cand {
        blocked[c] = true;
    }
    let mut set = vec![root];
    let mut visits = 0usize;
    extend(g, size, &mut set, cand, &mut blocked, &mut out, &mut visits, budget, &allow)?;
    for s in &mut out {
        s.sort_unstable();
    }
    Ok(out)
}

// `blocked` marks nodes in the set, in the candidate list, or excluded.
#[allow(clippy::too_many_arguments)]
fn extend(
    g: &SimpleGraph,
    size: usize,
    set: &mut Vec<usize>,
    cand: Vec<usize>,
    blocked: &mut [bool],
    out: &mut Vec<Vec<usize>>,
    visits: &mut usize,
    budget: usize,
    allow: &impl Fn(&[usize], usize) -> bool,
) -> Result<(), GraphError> {
    *visits += 1;
    if *visits > budget {
        return Err(GraphError::BudgetExceeded(budget));
    }
    if set.len() == size {
        out.push(set.clone());
        return Ok(());
    }
    for i in 0..cand.len() {
        let w = cand[i];
        if !allow(set, w) {
            continue;
        }
        let mut next: Vec<usize> = cand[i + 1..].to_vec();
        let mut added = Vec::new();
        for &u in g.neighbours(w) {
            if !blocked[u] {
                blocked[u] = true;
                added.push(u);
                next.push(u);
            }
        }
        set.push(w);
        extend(g, size, set, next, blocked, out, visits, budget, allow)?;
        set.pop();
        for u in added {
            blocked[u] = false;
        }
    }
    Ok(())
}

/// All {2,3}-trees of `g` of the given size that contain `root`.
pub fn enumerate_23trees(
    g: &SimpleGraph,
    root: usize,
    size: usize,
    budget: usize,
) -> Result<Vec<Vec<usize>>, GraphError> {
    let band = g.distance_band(2, 3);
    connected_sets_filtered(&band, root, size, budget, |set, w| {
        set.iter().all(|&s| !g.adjacent(s, w))
    })
}

/// Checks both defining conditions of a {2,3}-tree.
pub fn is_23tree(g: &SimpleGraph, t: &[usize]) -> bool {
    let dist: Vec<Vec<usize>> = t.iter().map(|&u| g.multi_bfs(&[u], 3)).collect();
    for (i, &a) in t.iter().enumerate() {
        for &b in &t[i + 1..] {
            if a == b || dist[i][b] < 2 {
                return false;
            }
        }
    }
    let pairs: Vec<(usize, usize)> = t
        .iter()
        .enumerate()
        .flat_map(|(i, _)| (i + 1..t.len()).map(move |j| (i, j)))
        .filter(|&(i, j)| (2..=3).contains(&dist[i][t[j]]))
        .collect();
    let local = SimpleGraph::from_edges(t.len(), &pairs);
    let all: Vec<usize> = (0..t.len()).collect();
    local.is_connected_set(&all)
}

/// Greedy {2,3}-tree inside `b` containing `anchor`: repeatedly drop the
/// closed neighbourhood of the tree from the pool and add the first pooled
/// node within distance 3 of the tree.
pub fn greedy_23tree(
    g: &SimpleGraph,
    b: &[usize],
    anchor: usize,
    deg_bound: usize,
) -> Result<Vec<usize>, GraphError> {
    if !b.contains(&anchor) {
        return Err(GraphError::AnchorMissing(anchor));
    }
    if let Some(&u) = b.iter().find(|&&u| u >= g.len()) {
        return Err(GraphError::NodeOutOfRange(u));
    }
    let actual = b.iter().map(|&u| g.neighbours(u).len()).max().unwrap_or(0);
    if actual > deg_bound {
        return Err(GraphError::DegreeBound {
            bound: deg_bound,
            actual,
        });
    }
    if !g.square().is_connected_set(b) {
        return Err(GraphError::NotSquareConnected);
    }
    let mut pool = vec![false; g.len()];
    for &u in b {
        pool[u] = true;
    }
    let mut tree = vec![anchor];
    loop {
        for &t in &tree {
            pool[t] = false;
            for &w in g.neighbours(t) {
                pool[w] = false;
            }
        }
        let dist = g.multi_bfs(&tree, 3);
        match (0..g.len()).find(|&u| pool[u] && dist[u] <= 3) {
            Some(u) => tree.push(u),
            None => break,
        }
    }
    Ok(tree)
}

/// `(e d)^(l-1) / 2`.
pub fn connected_set_bound(d: usize, ell: usize) -> f64 {
    (std::f64::consts::E * d as f64).powi(ell as i32 - 1) / 2.0
}

/// `(e d^3)^(l-1) / 2`.
pub fn tree23_bound(d: usize, ell: usize) -> f64 {
    (std::f64::consts::E * (d as f64).powi(3)).powi(ell as i32 - 1) / 2.0
}

/// Whether `sigma` is `ell`-bad at `v`: some {2,3}-tree of the line graph
/// of size `ell` through the first edge at `v` has at least `beta * ell`
/// edges that can be made monochromatic on `k2` of their vertices.
/// Pinnings are not consulted.
pub fn is_ell_bad(
    inst: &Instance,
    sigma: &[Colour],
    v: usize,
    ell: usize,
    beta: f64,
    k2: usize,
    budget: usize,
) -> Result<bool, GraphError> {
    if v >= inst.n() {
        return Err(GraphError::NodeOutOfRange(v));
    }
    let e0 = inst
        .edges()
        .iter()
        .position(|e| e.contains(v))
        .ok_or(GraphError::IsolatedVertex(v))?;
    let mono: Vec<bool> = inst
        .edges()
        .iter()
        .map(|e| {
            if e.len() < k2 {
                return false;
            }
            if k2 == 0 {
                return true;
            }
            let mut counts = std::collections::HashMap::new();
            e.vertices()
                .iter()
                .any(|&u| {
                    let c = counts.entry(sigma[u]).or_insert(0usize);
                    *c += 1;
                    *c >= k2
                })
        })
        .collect();
    let g = line_graph(inst);
    let trees = enumerate_23trees(&g, e0, ell, budget)?;
    let need = beta * ell as f64;
    Ok(trees
        .iter()
        .any(|t| t.iter().filter(|&&e| mono[e]).count() as f64 >= need))
}
