// Copyright 2026 The fdadmm Authors
// SPDX-License-Identifier: Apache-2.0

//! Directed communication graphs and column-stochastic consensus weights.
//!
//! Edges are written `(to, from)`: information flows from `from` to `to`,
//! matching the `p[to][from]` layout of the weight matrix (row = receiver,
//! column = sender).

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type NodeId = usize;

/// Exact link weight. Ratio weights are always `1 / (1 + out_degree)`.
pub type Weight = Ratio<u64>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Digraph {
    n: usize,
    out_neighbors: Vec<Vec<NodeId>>,
    in_neighbors: Vec<Vec<NodeId>>,
}

impl Digraph {
    /// Builds a digraph from `(to, from)` pairs.
    pub fn new(n: usize, edges: &[(NodeId, NodeId)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidConfig(
                "a digraph needs at least one node".into(),
            ));
        }
        let mut out_neighbors = vec![Vec::new(); n];
        let mut seen = vec![false; n * n];
        for &(to, from) in edges {
            if to >= n || from >= n {
                return Err(Error::InvalidEdge {
                    to,
                    from,
                    reason: "node id out of range",
                });
            }
            if to == from {
                return Err(Error::InvalidEdge {
                    to,
                    from,
                    reason: "self-loops are implicit",
                });
            }
            if core::mem::replace(&mut seen[from * n + to], true) {
                return Err(Error::InvalidEdge {
                    to,
                    from,
                    reason: "duplicate edge",
                });
            }
            out_neighbors[from].push(to);
        }
        let mut in_neighbors = vec![Vec::new(); n];
        for (from, outs) in out_neighbors.iter().enumerate() {
            for &to in outs {
                in_neighbors[to].push(from);
            }
        }
        Ok(Self {
            n,
            out_neighbors,
            in_neighbors,
        })
    }

    /// Directed ring `0 -> 1 -> ... -> n-1 -> 0`.
    pub fn cycle(n: usize) -> Self {
        let edges: Vec<_> = (0..n).filter(|_| n > 1).map(|i| ((i + 1) % n, i)).collect();
        Self::new(n, &edges).expect("ring edges are valid")
    }

    pub fn complete(n: usize) -> Self {
        let mut edges = Vec::new();
        for from in 0..n {
            for to in 0..n {
                if to != from {
                    edges.push((to, from));
                }
            }
        }
        Self::new(n, &edges).expect("complete edges are valid")
    }

    /// Hamiltonian cycle over a random permutation plus independent extra
    /// edges. Strongly connected by construction and deterministic per seed.
    pub fn random_strongly_connected(n: usize, extra_edge_prob: f64, seed: u64) -> Self {
        assert!(n >= 1, "need at least one node");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<NodeId> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut adjacent = vec![false; n * n];
        let mut edges = Vec::new();
        if n > 1 {
            for k in 0..n {
                let (from, to) = (order[k], order[(k + 1) % n]);
                adjacent[from * n + to] = true;
                edges.push((to, from));
            }
        }
        let p = extra_edge_prob.clamp(0.0, 1.0);
        for from in 0..n {
            for to in 0..n {
                if from != to && !adjacent[from * n + to] && rng.random_bool(p) {
                    adjacent[from * n + to] = true;
                    edges.push((to, from));
                }
            }
        }
        Self::new(n, &edges).expect("generated edges are valid")
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.out_neighbors.iter().map(Vec::len).sum()
    }

    pub fn out_neighbors(&self, node: NodeId) -> &[NodeId] {
        &self.out_neighbors[node]
    }

    pub fn in_neighbors(&self, node: NodeId) -> &[NodeId] {
        &self.in_neighbors[node]
    }

    pub fn out_degree(&self, node: NodeId) -> usize {
        self.out_neighbors[node].len()
    }

    pub fn in_degree(&self, node: NodeId) -> usize {
        self.in_neighbors[node].len()
    }

    pub fn has_edge(&self, to: NodeId, from: NodeId) -> bool {
        self.out_neighbors[from].contains(&to)
    }

    /// Edges as `(to, from)` pairs, grouped by sender.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.out_neighbors
            .iter()
            .enumerate()
            .flat_map(|(from, outs)| outs.iter().map(move |&to| (to, from)))
    }

    pub fn is_strongly_connected(&self) -> bool {
        let reach = |adj: &[Vec<NodeId>]| bfs(adj, 0).iter().all(|d| d.is_some());
        reach(&self.out_neighbors) && reach(&self.in_neighbors)
    }

    /// Hop distances from `source` along edge direction.
    pub fn distances_from(&self, source: NodeId) -> Vec<Option<usize>> {
        bfs(&self.out_neighbors, source)
    }

    /// Hop distances from every node to `target`.
    pub fn distances_to(&self, target: NodeId) -> Vec<Option<usize>> {
        bfs(&self.in_neighbors, target)
    }

    /// Largest distance from any node to `node`.
    pub fn in_eccentricity(&self, node: NodeId) -> Result<usize> {
        max_distance(&self.distances_to(node))
    }

    /// Largest distance from `node` to any node.
    pub fn out_eccentricity(&self, node: NodeId) -> Result<usize> {
        max_distance(&self.distances_from(node))
    }

    /// Longest shortest path, by all-pairs BFS.
    pub fn diameter(&self) -> Result<usize> {
        let mut diameter = 0;
        for source in 0..self.n {
            diameter = diameter.max(self.out_eccentricity(source)?);
        }
        Ok(diameter)
    }
}

fn bfs(adj: &[Vec<NodeId>], source: NodeId) -> Vec<Option<usize>> {
    let mut dist = vec![None; adj.len()];
    dist[source] = Some(0);
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        let du = dist[u].unwrap_or_default();
        for &v in &adj[u] {
            if dist[v].is_none() {
                dist[v] = Some(du + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

fn max_distance(dist: &[Option<usize>]) -> Result<usize> {
    dist.iter()
        .try_fold(0, |acc, d| d.map(|d| acc.max(d)))
        .ok_or(Error::NotStronglyConnected)
}

/// Dense column-stochastic weights `p[j][i]`: row `j` receives, column `i` sends.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    n: usize,
    entries: Vec<Weight>,
}

impl WeightMatrix {
    /// Each node splits its mass evenly over itself and its out-neighbors:
    /// `p[l][j] = 1 / (1 + out_degree(j))` for `l` in `{j} ∪ out(j)`.
    pub fn ratio_weights(g: &Digraph) -> Self {
        let n = g.node_count();
        let mut entries = vec![Weight::from_integer(0); n * n];
        for sender in 0..n {
            let w = Weight::new(1, 1 + g.out_degree(sender) as u64);
            entries[sender * n + sender] = w;
            for &receiver in g.out_neighbors(sender) {
                entries[receiver * n + sender] = w;
            }
        }
        Self { n, entries }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn weight(&self, receiver: NodeId, sender: NodeId) -> Weight {
        self.entries[receiver * self.n + sender]
    }

    pub fn get(&self, receiver: NodeId, sender: NodeId) -> f64 {
        let w = self.weight(receiver, sender);
        *w.numer() as f64 / *w.denom() as f64
    }

    pub fn column_sum_exact(&self, sender: NodeId) -> Weight {
        (0..self.n).map(|j| self.weight(j, sender)).sum()
    }

    pub fn column_sum(&self, sender: NodeId) -> f64 {
        (0..self.n).map(|j| self.get(j, sender)).sum()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|j| (0..self.n).map(|i| self.get(j, i)).collect())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force_diameter(g: &Digraph) -> usize {
        // Floyd-Warshall as an independent route.
        let n = g.node_count();
        let inf = usize::MAX / 4;
        let mut d = vec![vec![inf; n]; n];
        for i in 0..n {
            d[i][i] = 0;
        }
        for (to, from) in g.edges() {
            d[from][to] = 1;
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    d[i][j] = d[i][j].min(d[i][k] + d[k][j]);
                }
            }
        }
        d.iter().flatten().copied().max().unwrap()
    }

    #[test]
    fn single_node() {
        let g = Digraph::new(1, &[]).unwrap();
        assert_eq!(g.out_degree(0), 0);
        assert!(g.is_strongly_connected());
        assert_eq!(g.diameter().unwrap(), 0);
        let w = WeightMatrix::ratio_weights(&g);
        assert_eq!(w.to_dense(), vec![vec![1.0]]);
    }

    #[test]
    fn three_cycle_structure_and_weights() {
        let g = Digraph::new(3, &[(1, 0), (2, 1), (0, 2)]).unwrap();
        for j in 0..3 {
            assert_eq!(g.out_degree(j), 1);
            assert_eq!(g.in_degree(j), 1);
        }
        assert!(g.is_strongly_connected());
        assert_eq!(g.diameter().unwrap(), 2);
        let w = WeightMatrix::ratio_weights(&g);
        for j in 0..3 {
            for i in 0..3 {
                let expected = if i == j || g.has_edge(j, i) { 0.5 } else { 0.0 };
                assert_eq!(w.get(j, i), expected);
            }
        }
    }

    #[test]
    fn edge_direction_is_receiver_then_sender() {
        // (1, 0): node 0 sends to node 1, so p[1][0] > 0 and p[0][1] == 0.
        let g = Digraph::new(2, &[(1, 0)]).unwrap();
        assert_eq!(g.out_neighbors(0), &[1]);
        assert_eq!(g.in_neighbors(1), &[0]);
        let w = WeightMatrix::ratio_weights(&g);
        assert_eq!(w.get(1, 0), 0.5);
        assert_eq!(w.get(0, 1), 0.0);
        assert_eq!(w.get(1, 1), 1.0);
    }

    #[test]
    fn rejects_bad_edges() {
        let dup = Digraph::new(3, &[(1, 0), (1, 0)]);
        assert!(matches!(
            dup,
            Err(Error::InvalidEdge {
                reason: "duplicate edge",
                ..
            })
        ));
        assert!(matches!(
            Digraph::new(3, &[(2, 2)]),
            Err(Error::InvalidEdge { .. })
        ));
        assert!(matches!(
            Digraph::new(3, &[(3, 0)]),
            Err(Error::InvalidEdge { .. })
        ));
    }

    #[test]
    fn one_way_pair_is_not_strongly_connected() {
        let g = Digraph::new(2, &[(1, 0)]).unwrap();
        assert!(!g.is_strongly_connected());
        assert_eq!(g.diameter(), Err(Error::NotStronglyConnected));
    }

    #[test]
    fn star_with_back_edges() {
        let g = Digraph::new(4, &[(1, 0), (2, 0), (3, 0), (0, 1), (0, 2), (0, 3)]).unwrap();
        let w = WeightMatrix::ratio_weights(&g);
        for j in 0..4 {
            assert_eq!(w.weight(j, 0), Weight::new(1, 4));
        }
    }

    #[test]
    fn diameters() {
        assert_eq!(Digraph::complete(4).diameter().unwrap(), 1);
        // line 0-1-2-3-4 in both directions plus a return edge 4 -> 0
        let mut edges = vec![(0, 4)];
        for i in 0..4 {
            edges.push((i + 1, i));
            edges.push((i, i + 1));
        }
        let line = Digraph::new(5, &edges).unwrap();
        assert_eq!(line.diameter().unwrap(), brute_force_diameter(&line));
        assert_eq!(line.diameter().unwrap(), 4);
        assert_eq!(
            Digraph::random_strongly_connected(20, 0.0, 3)
                .diameter()
                .unwrap(),
            19
        );
    }

    #[test]
    fn random_generator_is_deterministic() {
        let a = Digraph::random_strongly_connected(6, 0.3, 7);
        let b = Digraph::random_strongly_connected(6, 0.3, 7);
        assert_eq!(a, b);
        assert!(a.is_strongly_connected());
        assert_eq!(
            Digraph::random_strongly_connected(1, 0.5, 1).edge_count(),
            0
        );
    }

    #[test]
    fn random_graphs_are_strongly_connected() {
        for seed in 0..1000u64 {
            let n = 1 + (seed % 30) as usize;
            let p = (seed % 7) as f64 / 10.0;
            let g = Digraph::random_strongly_connected(n, p, seed);
            assert!(g.is_strongly_connected(), "seed {seed}");
            let d = g.diameter().unwrap();
            assert!(d <= n.saturating_sub(1));
            assert_eq!(d, brute_force_diameter(&g));
        }
    }

    #[test]
    fn columns_sum_to_one() {
        for seed in 0..200u64 {
            let g = Digraph::random_strongly_connected(1 + (seed % 25) as usize, 0.4, seed);
            let w = WeightMatrix::ratio_weights(&g);
            for j in 0..g.node_count() {
                assert_eq!(w.column_sum_exact(j), Weight::from_integer(1));
                assert!((w.column_sum(j) - 1.0).abs() <= 1e-15);
            }
        }
    }
}
