//! Rooted spanning trees over the face-adjacency graph of Whitney cubes,
//! with subtree shadows and the John-type constant measuring how far a
//! node's shadow reaches relative to the node's size.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::GridDomain;
use crate::whitney::WhitneyDecomposition;

/// A rooted tree on nodes `0..n`, stored as a parent array plus derived
/// traversal data. `order` lists nodes parents-first starting at the root.
#[derive(Clone, Debug)]
pub struct Tree {
    parent: Vec<i32>,
    root: usize,
    order: Vec<u32>,
    children: Vec<Vec<u32>>,
    depth: Vec<u32>,
}

impl Tree {
    /// Build from a parent array with exactly one root marked by -1.
    /// Rejects forests, cycles, and out-of-range parents.
    pub fn from_parent(parent: Vec<i32>) -> Result<Tree> {
        let n = parent.len();
        if n == 0 {
            return Err(Error::InvalidParameter("empty tree".into()));
        }
        let roots: Vec<usize> = (0..n).filter(|&t| parent[t] < 0).collect();
        if roots.len() != 1 {
            return Err(Error::InvalidParameter(format!(
                "expected exactly one root, found {}",
                roots.len()
            )));
        }
        let root = roots[0];
        let mut children = vec![Vec::new(); n];
        for t in 0..n {
            let p = parent[t];
            if p >= 0 {
                if p as usize >= n {
                    return Err(Error::InvalidParameter(format!(
                        "node {t} has out-of-range parent {p}"
                    )));
                }
                children[p as usize].push(t as u32);
            }
        }
        let mut order = Vec::with_capacity(n);
        let mut depth = vec![0u32; n];
        let mut stack = vec![root];
        while let Some(t) = stack.pop() {
            order.push(t as u32);
            for &c in children[t].iter().rev() {
                depth[c as usize] = depth[t] + 1;
                stack.push(c as usize);
            }
        }
        if order.len() != n {
            return Err(Error::InvalidParameter(
                "parent array contains a cycle or unreachable nodes".into(),
            ));
        }
        Ok(Tree { parent, root, order, children, depth })
    }

    pub fn n(&self) -> usize {
        self.parent.len()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    #[inline]
    pub fn parent_of(&self, t: usize) -> Option<usize> {
        let p = self.parent[t];
        (p >= 0).then_some(p as usize)
    }

    pub fn parent_array(&self) -> &[i32] {
        &self.parent
    }

    /// Nodes in parents-first order; the root comes first.
    pub fn order(&self) -> &[u32] {
        &self.order
    }

    pub fn children(&self, t: usize) -> &[u32] {
        &self.children[t]
    }

    pub fn depth(&self, t: usize) -> u32 {
        self.depth[t]
    }

    /// Node, its parent, ..., root.
    pub fn path_to_root(&self, t: usize) -> Vec<usize> {
        let mut path = vec![t];
        let mut cur = t;
        while let Some(p) = self.parent_of(cur) {
            path.push(p);
            cur = p;
        }
        path
    }

    /// All nodes of the subtree rooted at `t`, parents-first.
    pub fn subtree(&self, t: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![t];
        while let Some(u) = stack.pop() {
            out.push(u);
            for &c in self.children[u].iter().rev() {
                stack.push(c as usize);
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TreeStrategy {
    /// Breadth-first from the largest cube; neighbor lists are ordered by
    /// (side descending, position), which keeps shadows compact.
    Bfs,
    /// Depth-first in lexicographic position order: a deliberately poor
    /// tree with long paths, useful as a contrast in experiments.
    LexDfs,
}

/// A spanning tree over the Whitney cubes of a decomposition; node ids
/// coincide with cube indices.
#[derive(Clone, Debug)]
pub struct CubeTree {
    pub tree: Tree,
    pub strategy: TreeStrategy,
}

/// Build the rooted spanning tree. The root is the largest cube (ties:
/// lexicographically smallest corner). Fails with `DisconnectedCubeGraph`
/// if the face-adjacency graph is not connected.
pub fn build_tree(
    dom: &GridDomain,
    dec: &WhitneyDecomposition,
    strategy: TreeStrategy,
) -> Result<CubeTree> {
    let n = dec.cubes.len();
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in &dec.face_pairs(dom) {
        adj[a as usize].push(b as usize);
        adj[b as usize].push(a as usize);
    }
    let key = |t: usize| {
        let q = &dec.cubes[t];
        (std::cmp::Reverse(q.side_cells), q.cell_lo)
    };
    for list in &mut adj {
        list.sort_by_key(|&t| key(t));
    }
    let root = (0..n).min_by_key(|&t| key(t)).unwrap();

    let mut parent = vec![-2i32; n];
    parent[root] = -1;
    let mut visited = 1usize;
    match strategy {
        TreeStrategy::Bfs => {
            let mut queue = std::collections::VecDeque::from([root]);
            while let Some(u) = queue.pop_front() {
                for &v in &adj[u] {
                    if parent[v] == -2 {
                        parent[v] = u as i32;
                        visited += 1;
                        queue.push_back(v);
                    }
                }
            }
        }
        TreeStrategy::LexDfs => {
            // Lexicographic position order regardless of size.
            for list in &mut adj {
                list.sort_by_key(|&t| dec.cubes[t].cell_lo);
            }
            let mut stack = vec![root];
            while let Some(u) = stack.pop() {
                for &v in adj[u].iter().rev() {
                    if parent[v] == -2 {
                        parent[v] = u as i32;
                        visited += 1;
                        stack.push(v);
                    }
                }
            }
        }
    }
    if visited != n {
        // Count components for the error report.
        let mut comp = vec![false; n];
        let mut components = 0usize;
        for s in 0..n {
            if comp[s] {
                continue;
            }
            components += 1;
            let mut stack = vec![s];
            comp[s] = true;
            while let Some(u) = stack.pop() {
                for &v in &adj[u] {
                    if !comp[v] {
                        comp[v] = true;
                        stack.push(v);
                    }
                }
            }
        }
        return Err(Error::DisconnectedCubeGraph { components });
    }
    Ok(CubeTree { tree: Tree::from_parent(parent)?, strategy })
}

#[derive(Clone, Debug, Serialize)]
pub struct ShadowStats {
    /// Exact max distance from each node's center to any point of any
    /// cube in its subtree (its shadow).
    pub radius: Vec<f64>,
    /// radius / side, per node.
    pub ratio: Vec<f64>,
    /// Grid cells covered by each subtree.
    pub subtree_cells: Vec<usize>,
    /// Max over nodes of radius / side: the John-type constant of the tree.
    pub john_constant: f64,
    /// Longest root-to-leaf path, in edges.
    pub max_depth: u32,
}

/// Measure shadows: for every node, how far its subtree reaches from its
/// center, relative to its own size.
pub fn shadow_stats(dom: &GridDomain, dec: &WhitneyDecomposition, tree: &Tree) -> ShadowStats {
    let dim = dom.dim;
    let n = tree.n();
    let mut subtree_cells = vec![0usize; n];
    for &t in tree.order().iter().rev() {
        let t = t as usize;
        let own = dec.cubes[t].side_cells.pow(dim as u32);
        subtree_cells[t] = own
            + tree
                .children(t)
                .iter()
                .map(|&c| subtree_cells[c as usize])
                .sum::<usize>();
    }

    use rayon::prelude::*;
    let radius: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|t| {
            let qt = dec.cubes[t].center(dim);
            let mut best: f64 = 0.0;
            for u in tree.subtree(t) {
                let qu = &dec.cubes[u];
                let cu = qu.center(dim);
                let mut d2 = 0.0;
                for a in 0..dim {
                    let off = (cu[a] - qt[a]).abs() + 0.5 * qu.side;
                    d2 += off * off;
                }
                best = best.max(d2);
            }
            best.sqrt()
        })
        .collect();
    let ratio: Vec<f64> = (0..n).map(|t| radius[t] / dec.cubes[t].side).collect();
    let john_constant = ratio.iter().cloned().fold(0.0, f64::max);
    let max_depth = (0..n).map(|t| tree.depth(t)).max().unwrap_or(0);
    ShadowStats { radius, ratio, subtree_cells, john_constant, max_depth }
}
