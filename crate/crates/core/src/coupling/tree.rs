//! Exhaustive enumeration of the coupling's branches up to a depth cap.

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};

use super::{check_params, Coupler, CouplingError, CouplingState, LEAF_BUDGET_BITS};
use crate::instance::{Colour, Instance};
use crate::oracle::Oracle;

/// Default cap on the number of tree nodes.
pub const DEFAULT_NODE_BUDGET: usize = 5_000_000;
/// Environment variable overriding [`DEFAULT_NODE_BUDGET`].
pub const NODE_BUDGET_ENV: &str = "CHROMATIC_LLL_NODE_BUDGET";

pub fn node_budget_from_env() -> usize {
    std::env::var(NODE_BUDGET_ENV)
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(DEFAULT_NODE_BUDGET)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeStatus {
    /// Children for every colour pair at `u`, stored contiguously from
    /// `first_child` in the order `cx * q + cy`.
    Internal { u: usize, first_child: usize },
    /// The coupling stopped; `leaf` indexes [`CouplingTree::leaves`].
    Halted { leaf: usize },
    /// Cut off at the depth cap.
    Truncated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub parent: Option<usize>,
    /// The step that produced this node from its parent.
    pub step: Option<(usize, Colour, Colour)>,
    pub n_col: usize,
    pub status: NodeStatus,
}

impl TreeNode {
    pub fn depth(&self) -> usize {
        self.n_col - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeafCounts {
    pub node: usize,
    pub nx: BigUint,
    pub ny: BigUint,
}

impl LeafCounts {
    pub fn nx_f64(&self) -> f64 {
        self.nx.to_f64().unwrap_or(f64::INFINITY)
    }

    pub fn ny_f64(&self) -> f64 {
        self.ny.to_f64().unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeConfig {
    pub v: usize,
    pub c1: Colour,
    pub c2: Colour,
    pub k1: usize,
    pub k2: usize,
    /// Maximum number of coloured vertices along a branch.
    pub depth: usize,
    pub node_budget: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingTree {
    pub config: TreeConfig,
    pub q: Colour,
    pub nodes: Vec<TreeNode>,
    pub leaves: Vec<LeafCounts>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct TreeStats {
    pub nodes: usize,
    pub internal: usize,
    pub halted: usize,
    /// Halted leaves strictly below the depth cap.
    pub halted_below_cap: usize,
    pub truncated: usize,
    pub max_depth: usize,
    pub zero_count_leaves: usize,
}

/// Builds the tree with the node budget taken from the environment.
pub fn build_tree(
    inst: &Instance,
    v: usize,
    c1: Colour,
    c2: Colour,
    k1: usize,
    k2: usize,
    depth: usize,
) -> Result<CouplingTree, CouplingError> {
    CouplingTree::build(
        inst,
        TreeConfig {
            v,
            c1,
            c2,
            k1,
            k2,
            depth,
            node_budget: node_budget_from_env(),
        },
    )
}

impl CouplingTree {
    pub fn build(inst: &Instance, config: TreeConfig) -> Result<Self, CouplingError> {
        check_params(inst, config.k1, config.k2)?;
        let coupler = Coupler::new(inst, config.k2);
        let oracle = Oracle::with_budget(LEAF_BUDGET_BITS);
        let cap = config.depth.max(1);
        let q = inst.q() as usize;
        let root = coupler.root(config.v, config.c1, config.c2)?;

        let mut tree = CouplingTree {
            config,
            q: inst.q(),
            nodes: Vec::new(),
            leaves: Vec::new(),
        };
        let mut stack: Vec<(usize, CouplingState)> = Vec::new();
        tree.push_node(&coupler, &oracle, None, None, root, cap, &mut stack)?;
        while let Some((id, state)) = stack.pop() {
            let u = match coupler.next_vertex(&state) {
                Some(u) => u,
                None => unreachable!("internal nodes are never halted"),
            };
            let first_child = tree.nodes.len();
            if first_child + q * q > config.node_budget {
                return Err(CouplingError::NodeBudget(config.node_budget));
            }
            tree.nodes[id].status = NodeStatus::Internal { u, first_child };
            for cx in 0..inst.q() {
                for cy in 0..inst.q() {
                    let mut child = state.clone();
                    coupler.extend_in_place(&mut child, u, cx, cy);
                    tree.push_node(&coupler, &oracle, Some(id), Some((u, cx, cy)), child, cap, &mut stack)?;
                }
            }
        }
        Ok(tree)
    }

    #[allow(clippy::too_many_arguments)]
    fn push_node(
        &mut self,
        coupler: &Coupler,
        oracle: &Oracle,
        parent: Option<usize>,
        step: Option<(usize, Colour, Colour)>,
        state: CouplingState,
        cap: usize,
        stack: &mut Vec<(usize, CouplingState)>,
    ) -> Result<(), CouplingError> {
        let id = self.nodes.len();
        let n_col = state.n_col;
        let status = if coupler.is_halted(&state) {
            let (nx, ny) = coupler.leaf_counts(&state, oracle)?;
            self.leaves.push(LeafCounts { node: id, nx, ny });
            NodeStatus::Halted {
                leaf: self.leaves.len() - 1,
            }
        } else if n_col >= cap {
            NodeStatus::Truncated
        } else {
            stack.push((id, state));
            // Placeholder until the children are expanded.
            NodeStatus::Truncated
        };
        self.nodes.push(TreeNode {
            parent,
            step,
            n_col,
            status,
        });
        Ok(())
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn depth_cap(&self) -> usize {
        self.config.depth.max(1)
    }

    pub fn node(&self, id: usize) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn children(&self, id: usize) -> std::ops::Range<usize> {
        match self.nodes[id].status {
            NodeStatus::Internal { first_child, .. } => {
                let q = self.q as usize;
                first_child..first_child + q * q
            }
            _ => 0..0,
        }
    }

    pub fn child(&self, id: usize, cx: Colour, cy: Colour) -> Option<usize> {
        match self.nodes[id].status {
            NodeStatus::Internal { first_child, .. } => {
                Some(first_child + (cx * self.q + cy) as usize)
            }
            _ => None,
        }
    }

    pub fn leaf(&self, id: usize) -> Option<&LeafCounts> {
        match self.nodes[id].status {
            NodeStatus::Halted { leaf } => Some(&self.leaves[leaf]),
            _ => None,
        }
    }

    /// Whether a halted leaf lies strictly below the depth cap.
    pub fn is_constrained_leaf(&self, id: usize) -> bool {
        matches!(self.nodes[id].status, NodeStatus::Halted { .. })
            && self.nodes[id].n_col < self.depth_cap()
    }

    /// Steps from the root down to `id`.
    pub fn path(&self, id: usize) -> Vec<(usize, Colour, Colour)> {
        let mut out = Vec::new();
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent {
            out.push(self.nodes[cur].step.expect("non-root nodes carry a step"));
            cur = p;
        }
        out.reverse();
        out
    }

    /// Recomputes the coupling state at `id` by replaying its path.
    pub fn replay(&self, inst: &Instance, id: usize) -> Result<CouplingState, CouplingError> {
        let coupler = Coupler::new(inst, self.config.k2);
        let mut s = coupler.root(self.config.v, self.config.c1, self.config.c2)?;
        for (u, cx, cy) in self.path(id) {
            s = coupler.extend(&s, u, cx, cy)?;
        }
        Ok(s)
    }

    pub fn stats(&self) -> TreeStats {
        let mut st = TreeStats {
            nodes: self.nodes.len(),
            internal: 0,
            halted: 0,
            halted_below_cap: 0,
            truncated: 0,
            max_depth: 0,
            zero_count_leaves: 0,
        };
        for (id, n) in self.nodes.iter().enumerate() {
            st.max_depth = st.max_depth.max(n.depth());
            match n.status {
                NodeStatus::Internal { .. } => st.internal += 1,
                NodeStatus::Truncated => st.truncated += 1,
                NodeStatus::Halted { leaf } => {
                    st.halted += 1;
                    if self.is_constrained_leaf(id) {
                        st.halted_below_cap += 1;
                    }
                    let l = &self.leaves[leaf];
                    if l.nx.is_zero() || l.ny.is_zero() {
                        st.zero_count_leaves += 1;
                    }
                }
            }
        }
        st
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(depth: usize) -> TreeConfig {
        TreeConfig {
            v: 0,
            c1: 0,
            c2: 1,
            k1: 1,
            k2: 0,
            depth,
            node_budget: 100_000,
        }
    }

    #[test]
    fn single_edge_tree() {
        let inst = Instance::new(3, 2, vec![vec![0, 1, 2]]).unwrap();
        let t = CouplingTree::build(&inst, cfg(10)).unwrap();
        assert_eq!(t.children(0).len(), 4);
        let st = t.stats();
        assert_eq!(st.nodes, t.len());
        assert_eq!(st.internal + st.halted + st.truncated, st.nodes);
        assert_eq!(st.truncated, 0);
        for id in 0..t.len() {
            let s = t.replay(&inst, id).unwrap();
            assert_eq!(s.n_col, t.node(id).n_col);
            let halted = Coupler::new(&inst, 0).is_halted(&s);
            assert_eq!(halted, t.leaf(id).is_some());
        }
    }

    #[test]
    fn truncation_and_budget() {
        let inst = Instance::new(5, 2, vec![vec![0, 1, 2], vec![2, 3, 4]]).unwrap();
        let t = CouplingTree::build(&inst, cfg(2)).unwrap();
        assert!(t.stats().truncated > 0);
        assert!(t.nodes.iter().all(|n| n.n_col <= 2));
        let mut small = cfg(10);
        small.node_budget = 3;
        assert_eq!(
            CouplingTree::build(&inst, small),
            Err(CouplingError::NodeBudget(3))
        );
    }

    #[test]
    fn child_indexing() {
        let inst = Instance::new(3, 3, vec![vec![0, 1, 2]]).unwrap();
        let t = CouplingTree::build(&inst, cfg(5)).unwrap();
        let c = t.child(0, 2, 1).unwrap();
        assert_eq!(t.node(c).step.map(|s| (s.1, s.2)), Some((2, 1)));
        assert_eq!(t.node(c).parent, Some(0));
    }
}
