//! Peer graph, gradient measurement rule and spanning-tree averaging.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::distortion::{ErrorKey, ErrorModel};
use crate::error::{check_dim, Error, Result};
use crate::objective::{Objective, Problem};
use crate::scalar::Scalar;

/// How to build a [`Topology`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TopologySpec {
    Complete(usize),
    Ring(usize),
    Path(usize),
    Edges {
        nodes: usize,
        edges: Vec<(usize, usize)>,
    },
}

impl TopologySpec {
    pub fn nodes(&self) -> usize {
        match self {
            Self::Complete(n) | Self::Ring(n) | Self::Path(n) => *n,
            Self::Edges { nodes, .. } => *nodes,
        }
    }

    fn edge_list(&self) -> Vec<(usize, usize)> {
        match self {
            Self::Complete(n) => (0..*n)
                .flat_map(|i| ((i + 1)..*n).map(move |j| (i, j)))
                .collect(),
            Self::Ring(n) => {
                let mut e: Vec<_> = (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect();
                if *n > 2 {
                    e.push((0, n - 1));
                }
                e
            }
            Self::Path(n) => (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect(),
            Self::Edges { edges, .. } => edges.clone(),
        }
    }
}

impl fmt::Display for TopologySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Complete(n) => write!(f, "complete({n})"),
            Self::Ring(n) => write!(f, "ring({n})"),
            Self::Path(n) => write!(f, "path({n})"),
            Self::Edges { nodes, edges } => write!(f, "edges({nodes}, {} links)", edges.len()),
        }
    }
}

/// Parses an edge-list file: one `i j` pair per line, 0-based, `#` comments.
pub fn parse_edge_list(text: &str) -> Result<Vec<(usize, usize)>> {
    let mut edges = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        let bad = || Error::Parse {
            line: idx + 1,
            msg: format!("expected `i j`, got `{line}`"),
        };
        if toks.len() != 2 {
            return Err(bad());
        }
        let i = toks[0].parse().map_err(|_| bad())?;
        let j = toks[1].parse().map_err(|_| bad())?;
        edges.push((i, j));
    }
    Ok(edges)
}

/// An undirected connected graph with a breadth-first spanning tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    nodes: usize,
    edges: BTreeSet<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
    tree_edges: Vec<(usize, usize)>,
    tree_neighbors: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    bfs_order: Vec<usize>,
    complete: bool,
}

impl Topology {
    /// Validates the graph and roots a BFS spanning tree at node 0, visiting
    /// neighbors in ascending index order.
    pub fn build(spec: &TopologySpec) -> Result<Self> {
        let nodes = spec.nodes();
        if nodes < 2 {
            return Err(Error::Input(format!(
                "a topology needs at least 2 nodes, got {nodes}"
            )));
        }
        let mut edges = BTreeSet::new();
        for (i, j) in spec.edge_list() {
            if i >= nodes || j >= nodes {
                return Err(Error::Input(format!(
                    "edge ({i}, {j}) out of range for {nodes} nodes"
                )));
            }
            if i == j {
                return Err(Error::Input(format!("self-loop at node {i}")));
            }
            edges.insert((i.min(j), i.max(j)));
        }
        let mut neighbors = vec![Vec::new(); nodes];
        for &(i, j) in &edges {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        neighbors.iter_mut().for_each(|v| v.sort_unstable());

        let mut parent = vec![usize::MAX; nodes];
        let mut seen = vec![false; nodes];
        let mut bfs_order = Vec::with_capacity(nodes);
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            bfs_order.push(u);
            for &v in &neighbors[u] {
                if !seen[v] {
                    seen[v] = true;
                    parent[v] = u;
                    queue.push_back(v);
                }
            }
        }
        let unreachable: Vec<usize> = (0..nodes).filter(|&v| !seen[v]).collect();
        if !unreachable.is_empty() {
            return Err(Error::Disconnected(unreachable));
        }

        let mut tree_edges = Vec::with_capacity(nodes - 1);
        let mut tree_neighbors = vec![Vec::new(); nodes];
        let mut children = vec![Vec::new(); nodes];
        for &v in &bfs_order[1..] {
            let p = parent[v];
            tree_edges.push((p, v));
            tree_neighbors[p].push(v);
            tree_neighbors[v].push(p);
            children[p].push(v);
        }
        tree_neighbors.iter_mut().for_each(|v| v.sort_unstable());
        children.iter_mut().for_each(|v| v.sort_unstable());
        let complete = edges.len() == nodes * (nodes - 1) / 2;
        Ok(Self {
            nodes,
            edges,
            neighbors,
            tree_edges,
            tree_neighbors,
            children,
            bfs_order,
            complete,
        })
    }

    pub fn complete(nodes: usize) -> Result<Self> {
        Self::build(&TopologySpec::Complete(nodes))
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    /// Undirected edges as `(min, max)` pairs.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Tree edges as `(parent, child)` in BFS discovery order.
    pub fn tree_edges(&self) -> &[(usize, usize)] {
        &self.tree_edges
    }

    pub fn tree_neighbors(&self, i: usize) -> &[usize] {
        &self.tree_neighbors[i]
    }

    pub fn is_complete(&self) -> bool {
        self.complete
    }

    pub fn is_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i.min(j), i.max(j)))
    }

    /// Gradient messages exchanged in one round: every node hears each neighbor once.
    pub fn exchange_messages(&self) -> usize {
        2 * self.edges.len()
    }

    /// Messages used by one [`Topology::tree_average`].
    pub fn averaging_messages(&self) -> usize {
        2 * (self.nodes - 1)
    }

    /// Measurement `h_ij` that node `i` holds for source `j`'s gradient at `x_j`.
    ///
    /// Own gradients are exact; neighbors' gradients carry the model's error;
    /// non-neighbors contribute nothing.
    #[allow(clippy::too_many_arguments)]
    pub fn measure<T: Scalar>(
        &self,
        problem: &Problem<T>,
        model: &ErrorModel<T>,
        receiver: usize,
        source: usize,
        x_source: &[T],
        iter: usize,
        trial: usize,
    ) -> Vec<T> {
        let grad = problem.component(source).gradient(x_source);
        if receiver == source {
            return grad;
        }
        if !self.is_edge(receiver, source) {
            return vec![T::zero(); grad.len()];
        }
        model.distort(
            ErrorKey {
                receiver,
                source,
                iter,
                trial,
            },
            &grad,
        )
    }

    /// Exact mean of one vector per node, computed by accumulating
    /// `(sum, count)` from the leaves to the root of the spanning tree and
    /// broadcasting the result back down. Returns the mean and the number of
    /// vector messages sent.
    pub fn tree_average<T: Scalar>(&self, values: &[Vec<T>]) -> Result<(Vec<T>, usize)> {
        check_dim(self.nodes, values.len())?;
        let n = values[0].len();
        for v in values {
            check_dim(n, v.len())?;
        }
        let mut partial: Vec<Option<(Vec<T>, usize)>> = vec![None; self.nodes];
        for &u in self.bfs_order.iter().rev() {
            let mut sum = values[u].clone();
            let mut count = 1usize;
            for &c in &self.children[u] {
                let (child_sum, child_count) =
                    partial[c].take().expect("children finish before parents");
                crate::linalg::add_into(&mut sum, &child_sum);
                count += child_count;
            }
            partial[u] = Some((sum, count));
        }
        let (sum, count) = partial[0].take().expect("root accumulated");
        if count != self.nodes {
            return Err(Error::Internal(format!(
                "tree accumulation reached {count} of {} nodes",
                self.nodes
            )));
        }
        let denom = T::count(count);
        let mean = sum.into_iter().map(|s| s / denom).collect();
        Ok((mean, self.averaging_messages()))
    }
}
