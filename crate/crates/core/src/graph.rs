//! Undirected graphs, tree generators and BFS-based structural metrics.
//!
//! Graphs are immutable after construction: node ids are `0..n-1`, the edge
//! list is kept in insertion order and the adjacency lists mirror it.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone)]
pub struct Graph {
    adjacency: Vec<Vec<u32>>,
    edges: Vec<(u32, u32)>,
    /// Edge ids incident to each node, aligned with `adjacency`.
    incident: Vec<Vec<u32>>,
    is_tree: bool,
}

impl Graph {
    /// Builds a graph from an edge list, rejecting self-loops, duplicate
    /// edges and out-of-range ids.
    pub fn from_edges(n: usize, edges: Vec<(u32, u32)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("graph needs at least one node"));
        }
        let mut adjacency = vec![Vec::new(); n];
        let mut incident = vec![Vec::new(); n];
        let mut seen = std::collections::HashSet::new();
        for (id, &(u, v)) in edges.iter().enumerate() {
            if u as usize >= n || v as usize >= n {
                return Err(Error::invalid(format!("edge ({u},{v}) out of range")));
            }
            if u == v {
                return Err(Error::invalid(format!("self-loop at node {u}")));
            }
            let key = (u.min(v), u.max(v));
            if !seen.insert(key) {
                return Err(Error::invalid(format!("duplicate edge ({u},{v})")));
            }
            adjacency[u as usize].push(v);
            adjacency[v as usize].push(u);
            incident[u as usize].push(id as u32);
            incident[v as usize].push(id as u32);
        }
        let mut g = Graph { adjacency, edges, incident, is_tree: false };
        g.is_tree = g.edge_count() == n - 1 && g.is_connected();
        Ok(g)
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn edge(&self, id: usize) -> (u32, u32) {
        self.edges[id]
    }

    pub fn neighbours(&self, v: u32) -> &[u32] {
        &self.adjacency[v as usize]
    }

    /// Edge ids incident to `v`.
    pub fn incident_edges(&self, v: u32) -> &[u32] {
        &self.incident[v as usize]
    }

    pub fn degree(&self, v: u32) -> usize {
        self.adjacency[v as usize].len()
    }

    pub fn is_tree(&self) -> bool {
        self.is_tree
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.node_count()];
        let mut queue = VecDeque::from([0u32]);
        seen[0] = true;
        let mut visited = 1;
        while let Some(v) = queue.pop_front() {
            for &w in self.neighbours(v) {
                if !seen[w as usize] {
                    seen[w as usize] = true;
                    visited += 1;
                    queue.push_back(w);
                }
            }
        }
        visited == self.node_count()
    }

    /// BFS distances from `source`; unreachable nodes get `u32::MAX`.
    pub fn bfs_distances(&self, source: u32) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.node_count()];
        dist[source as usize] = 0;
        let mut queue = VecDeque::from([source]);
        while let Some(v) = queue.pop_front() {
            for &w in self.neighbours(v) {
                if dist[w as usize] == u32::MAX {
                    dist[w as usize] = dist[v as usize] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Exact diameter: double BFS on trees, all-pairs BFS otherwise.
    pub fn diameter(&self) -> Result<usize> {
        if !self.is_connected() {
            return Err(Error::Disconnected);
        }
        if self.node_count() == 1 {
            return Ok(0);
        }
        if self.is_tree {
            let first = self.bfs_distances(0);
            let far = argmax(&first);
            let second = self.bfs_distances(far);
            Ok(*second.iter().max().unwrap() as usize)
        } else {
            let mut best = 0;
            for v in 0..self.node_count() as u32 {
                let d = self.bfs_distances(v);
                best = best.max(*d.iter().max().unwrap() as usize);
            }
            Ok(best)
        }
    }

    /// Serialises as `n m` followed by `u v` lines, 0-based, LF endings.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {}", self.node_count(), self.edge_count());
        for &(u, v) in &self.edges {
            let _ = writeln!(out, "{u} {v}");
        }
        out
    }

    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::GraphFile("empty file".into()))?;
        let mut parts = header.split_whitespace();
        let n: usize = parse_field(parts.next(), "node count")?;
        let m: usize = parse_field(parts.next(), "edge count")?;
        let mut edges = Vec::with_capacity(m);
        for line in lines.take(m) {
            let mut parts = line.split_whitespace();
            let u: u32 = parse_field(parts.next(), "edge endpoint")?;
            let v: u32 = parse_field(parts.next(), "edge endpoint")?;
            edges.push((u, v));
        }
        if edges.len() != m {
            return Err(Error::GraphFile(format!(
                "expected {m} edges, found {}",
                edges.len()
            )));
        }
        Graph::from_edges(n, edges)
    }
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, what: &str) -> Result<T> {
    field
        .ok_or_else(|| Error::GraphFile(format!("missing {what}")))?
        .parse()
        .map_err(|_| Error::GraphFile(format!("bad {what}")))
}

fn argmax(values: &[u32]) -> u32 {
    let mut best = 0usize;
    for (i, &v) in values.iter().enumerate() {
        if v != u32::MAX && v > values[best] {
            best = i;
        }
    }
    best as u32
}

/// Fully determines a graph instance, including the seed for random
/// families; serialises as tagged JSON, e.g. `{"family":"path","n":128}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum GraphDescriptor {
    Path { n: usize },
    Star { n: usize },
    BalancedBinary { n: usize },
    RandomBoundedDegree { n: usize, delta_cap: usize, seed: u64 },
    LowerBoundTnk { n: usize, k: usize },
    FromFile { path: String },
}

impl GraphDescriptor {
    pub fn build(&self) -> Result<Graph> {
        match self {
            GraphDescriptor::Path { n } => generate_path(*n),
            GraphDescriptor::Star { n } => generate_star(*n),
            GraphDescriptor::BalancedBinary { n } => generate_balanced_binary_tree(*n),
            GraphDescriptor::RandomBoundedDegree { n, delta_cap, seed } => {
                generate_random_bounded_degree_tree(*n, *delta_cap, *seed)
            }
            GraphDescriptor::LowerBoundTnk { n, k } => generate_lower_bound_tree(*n, *k),
            GraphDescriptor::FromFile { path } => {
                Graph::from_edge_list(&std::fs::read_to_string(Path::new(path))?)
            }
        }
    }

    pub fn node_count(&self) -> Option<usize> {
        match self {
            GraphDescriptor::Path { n }
            | GraphDescriptor::Star { n }
            | GraphDescriptor::BalancedBinary { n }
            | GraphDescriptor::RandomBoundedDegree { n, .. }
            | GraphDescriptor::LowerBoundTnk { n, .. } => Some(*n),
            GraphDescriptor::FromFile { .. } => None,
        }
    }

    /// Degree bound used for palette sizing: the graph-class bound for
    /// generated families, the realized maximum degree otherwise.
    pub fn degree_bound(&self, graph: &Graph) -> usize {
        match self {
            GraphDescriptor::Path { .. } => 2,
            GraphDescriptor::Star { n } => n.saturating_sub(1).max(1),
            GraphDescriptor::BalancedBinary { .. } | GraphDescriptor::LowerBoundTnk { .. } => 3,
            GraphDescriptor::RandomBoundedDegree { delta_cap, .. } => *delta_cap,
            GraphDescriptor::FromFile { .. } => graph.max_degree().max(1),
        }
    }
}

pub fn generate_path(n: usize) -> Result<Graph> {
    if n == 0 {
        return Err(Error::invalid("path needs n >= 1"));
    }
    let edges = (0..n.saturating_sub(1))
        .map(|i| (i as u32, (i + 1) as u32))
        .collect();
    Graph::from_edges(n, edges)
}

pub fn generate_star(n: usize) -> Result<Graph> {
    if n == 0 {
        return Err(Error::invalid("star needs n >= 1"));
    }
    let edges = (1..n).map(|i| (0u32, i as u32)).collect();
    Graph::from_edges(n, edges)
}

/// Complete-as-possible binary tree, filled breadth-first left to right:
/// node `i > 0` hangs off node `(i - 1) / 2`.
pub fn generate_balanced_binary_tree(n: usize) -> Result<Graph> {
    if n == 0 {
        return Err(Error::invalid("binary tree needs n >= 1"));
    }
    let edges = (1..n).map(|i| (((i - 1) / 2) as u32, i as u32)).collect();
    Graph::from_edges(n, edges)
}

/// Uniform-attachment tree in which each new node attaches to a uniformly
/// chosen existing node whose degree is still below `delta_cap`.
pub fn generate_random_bounded_degree_tree(n: usize, delta_cap: usize, seed: u64) -> Result<Graph> {
    if n == 0 {
        return Err(Error::invalid("tree needs n >= 1"));
    }
    if delta_cap < 2 && n >= 3 {
        return Err(Error::invalid("delta_cap must be >= 2 for n >= 3"));
    }
    let mut rng = SplitMix64::new(seed);
    let mut degree = vec![0usize; n];
    // nodes that can still accept a new edge
    let mut open: Vec<u32> = vec![0];
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    for i in 1..n as u32 {
        let idx = rng.next_below(open.len() as u64) as usize;
        let target = open[idx];
        edges.push((target, i));
        degree[target as usize] += 1;
        degree[i as usize] += 1;
        if degree[target as usize] >= delta_cap {
            open.swap_remove(idx);
        }
        if degree[i as usize] < delta_cap {
            open.push(i);
        }
    }
    Graph::from_edges(n, edges)
}

/// The scaling lower-bound tree: a path of `8k` nodes with one balanced
/// binary tree attached (root to endpoint) on each side, sized
/// `floor((n-8k)/2)` and `ceil((n-8k)/2)` so the total is exactly `n`.
pub fn generate_lower_bound_tree(n: usize, k: usize) -> Result<Graph> {
    let log2n = (usize::BITS - n.saturating_sub(1).leading_zeros()) as usize; // ceil(log2 n)
    if n == 0 || k < log2n.max(1) || 8 * k > n {
        return Err(Error::invalid(format!(
            "lower-bound tree needs ceil(log2 n) <= k <= n/8, got n={n} k={k}"
        )));
    }
    let path_len = 8 * k;
    let rest = n - path_len;
    let left = rest / 2;
    let right = rest - left;

    let mut edges: Vec<(u32, u32)> = (0..path_len - 1)
        .map(|i| (i as u32, (i + 1) as u32))
        .collect();
    // left tree occupies ids path_len..path_len+left, root attached to v_0
    append_binary_tree(&mut edges, path_len as u32, left, 0);
    // right tree follows, root attached to v_{8k-1}
    append_binary_tree(
        &mut edges,
        (path_len + left) as u32,
        right,
        (path_len - 1) as u32,
    );
    Graph::from_edges(n, edges)
}

fn append_binary_tree(edges: &mut Vec<(u32, u32)>, base: u32, size: usize, attach: u32) {
    if size == 0 {
        return;
    }
    edges.push((attach, base));
    for i in 1..size as u32 {
        edges.push((base + (i - 1) / 2, base + i));
    }
}

/// True iff for every node the colours of its neighbours are pairwise
/// distinct; a node itself may share a colour with at most one neighbour.
pub fn is_valid_two_hop_colouring(graph: &Graph, colours: &[impl Copy + Eq]) -> bool {
    assert_eq!(colours.len(), graph.node_count());
    for v in 0..graph.node_count() as u32 {
        let nbrs = graph.neighbours(v);
        for i in 0..nbrs.len() {
            for j in i + 1..nbrs.len() {
                if colours[nbrs[i] as usize] == colours[nbrs[j] as usize] {
                    return false;
                }
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_path() {
        let g = generate_path(2).unwrap();
        assert_eq!(g.edges(), &[(0, 1)]);
        assert!(g.is_tree());
    }

    #[test]
    fn path_metrics() {
        let g = generate_path(5).unwrap();
        assert_eq!(g.diameter().unwrap(), 4);
        assert_eq!(g.max_degree(), 2);
        let g = generate_path(10).unwrap();
        assert_eq!(g.diameter().unwrap(), 9);
        assert_eq!(g.max_degree(), 2);
    }

    #[test]
    fn degenerate_path() {
        let g = generate_path(1).unwrap();
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.diameter().unwrap(), 0);
        assert!(generate_path(0).is_err());
    }

    #[test]
    fn star_metrics() {
        let g = generate_star(10).unwrap();
        assert_eq!(g.diameter().unwrap(), 2);
        assert_eq!(g.max_degree(), 9);
    }

    #[test]
    fn complete_binary_tree_shape() {
        let g = generate_balanced_binary_tree(7).unwrap();
        assert_eq!(g.max_degree(), 3);
        // depth 2: farthest leaves are 3..6, pairwise distance at most 4
        assert_eq!(g.diameter().unwrap(), 4);
        let g1 = generate_balanced_binary_tree(1).unwrap();
        assert_eq!(g1.node_count(), 1);
        assert!(generate_balanced_binary_tree(0).is_err());
    }

    #[test]
    fn binary_tree_diameter_matches_bfs_oracle() {
        let g = generate_balanced_binary_tree(10).unwrap();
        // all-pairs BFS oracle
        let mut best = 0;
        for v in 0..10 {
            best = best.max(*g.bfs_distances(v).iter().max().unwrap());
        }
        assert_eq!(best, 5);
        assert_eq!(g.diameter().unwrap(), 5);
    }

    #[test]
    fn bounded_degree_tree_basics() {
        let g = generate_random_bounded_degree_tree(3, 2, 0).unwrap();
        assert_eq!(g.diameter().unwrap(), 2); // forced path shape
        let g = generate_random_bounded_degree_tree(50, 3, 1).unwrap();
        assert!(g.is_tree());
        assert_eq!(g.edge_count(), 49);
        assert!(g.max_degree() <= 3);
        let again = generate_random_bounded_degree_tree(50, 3, 1).unwrap();
        assert_eq!(g.edges(), again.edges());
        assert!(generate_random_bounded_degree_tree(5, 1, 0).is_err());
    }

    #[test]
    fn lower_bound_tree_census() {
        let g = generate_lower_bound_tree(128, 8).unwrap();
        assert_eq!(g.node_count(), 128);
        assert!(g.is_tree());
        let d = g.diameter().unwrap();
        assert!((64..=64 + 2 * 6).contains(&d), "diameter {d}");

        // n = 8k exactly: a pure path
        let g = generate_lower_bound_tree(64, 8).unwrap();
        assert_eq!(g.diameter().unwrap(), 63);
        assert_eq!(g.max_degree(), 2);

        assert!(generate_lower_bound_tree(128, 20).is_err());
    }

    #[test]
    fn lower_bound_tree_node_count_sweep() {
        for n in (64usize..=512).step_by(64) {
            let log2n = (usize::BITS - (n - 1).leading_zeros()) as usize;
            for k in log2n..=n / 8 {
                let g = generate_lower_bound_tree(n, k).unwrap();
                assert_eq!(g.node_count(), n, "n={n} k={k}");
                assert_eq!(g.edge_count(), n - 1);
                assert!(g.is_tree());
            }
        }
    }

    #[test]
    fn two_hop_colouring_definition() {
        let path = generate_path(3).unwrap();
        assert!(!is_valid_two_hop_colouring(&path, &[1, 2, 1]));
        let edge = generate_path(2).unwrap();
        assert!(is_valid_two_hop_colouring(&edge, &[1, 1]));
        let g = generate_balanced_binary_tree(6).unwrap();
        let injective: Vec<usize> = (0..6).collect();
        assert!(is_valid_two_hop_colouring(&g, &injective));
    }

    #[test]
    fn two_hop_agrees_with_length_two_path_enumeration() {
        let mut rng = SplitMix64::new(5);
        for trial in 0..1000 {
            let n = 2 + (rng.next_below(19) as usize);
            let g =
                generate_random_bounded_degree_tree(n, 2 + rng.next_below(4) as usize, trial)
                    .unwrap();
            let colours: Vec<usize> =
                (0..n).map(|_| rng.next_below(4) as usize).collect();
            // oracle: enumerate all length-2 paths (u, v, w)
            let mut oracle = true;
            'outer: for v in 0..n as u32 {
                let nbrs = g.neighbours(v);
                for &u in nbrs {
                    for &w in nbrs {
                        if u < w && colours[u as usize] == colours[w as usize] {
                            oracle = false;
                            break 'outer;
                        }
                    }
                }
            }
            assert_eq!(is_valid_two_hop_colouring(&g, &colours), oracle);
        }
    }

    #[test]
    fn diameter_agrees_with_all_pairs_bfs() {
        let mut rng = SplitMix64::new(11);
        for trial in 0..200 {
            let n = 2 + rng.next_below(49) as usize;
            let g = generate_random_bounded_degree_tree(n, 2 + rng.next_below(5) as usize, trial)
                .unwrap();
            let mut oracle = 0;
            for v in 0..n as u32 {
                oracle = oracle.max(*g.bfs_distances(v).iter().max().unwrap() as usize);
            }
            assert_eq!(g.diameter().unwrap(), oracle);
        }
    }

    #[test]
    fn edge_list_round_trip() {
        let g = generate_lower_bound_tree(64, 6).unwrap();
        let text = g.to_edge_list();
        let back = Graph::from_edge_list(&text).unwrap();
        assert_eq!(g.edges(), back.edges());
    }

    #[test]
    fn descriptor_json_shape() {
        let d: GraphDescriptor = serde_json::from_str(r#"{"family":"path","n":128}"#).unwrap();
        assert_eq!(d, GraphDescriptor::Path { n: 128 });
        let s = serde_json::to_string(&d).unwrap();
        assert_eq!(s, r#"{"family":"path","n":128}"#);
    }

    #[test]
    fn generator_outputs_are_connected_trees() {
        for d in [
            GraphDescriptor::Path { n: 17 },
            GraphDescriptor::Star { n: 9 },
            GraphDescriptor::BalancedBinary { n: 21 },
            GraphDescriptor::RandomBoundedDegree { n: 33, delta_cap: 4, seed: 3 },
            GraphDescriptor::LowerBoundTnk { n: 96, k: 8 },
        ] {
            let g = d.build().unwrap();
            assert!(g.is_connected());
            assert_eq!(g.edge_count(), g.node_count() - 1);
            assert!(g.is_tree());
        }
    }
}
