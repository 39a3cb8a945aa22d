//! Undirected simple graphs, the standard families used by the experiments,
//! and the spectral gap of the lazy all-edges-active diffusion walk.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng;

/// Rejection sampling of random regular graphs gives up after this many
/// pairings.
pub const MAX_PAIRING_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    Complete,
    Cycle,
    Hypercube,
    RandomRegular,
    Torus,
}

impl GraphKind {
    pub const ALL: [GraphKind; 5] = [
        GraphKind::Complete,
        GraphKind::Cycle,
        GraphKind::Hypercube,
        GraphKind::RandomRegular,
        GraphKind::Torus,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GraphKind::Complete => "complete",
            GraphKind::Cycle => "cycle",
            GraphKind::Hypercube => "hypercube",
            GraphKind::RandomRegular => "random_regular",
            GraphKind::Torus => "torus",
        }
    }
}

impl fmt::Display for GraphKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GraphKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GraphKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| invalid(format!("unknown graph family `{s}`")))
    }
}

/// An undirected simple graph on nodes `0..n`.
///
/// Edges are stored canonically as sorted `(u, v)` pairs with `u < v`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    degree: Vec<usize>,
    adjacency: Vec<Vec<usize>>,
    kind: Option<GraphKind>,
}

impl Graph {
    /// Builds a graph from an arbitrary edge list, rejecting self-loops,
    /// duplicates and out-of-range ids.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut canon: Vec<(usize, usize)> = Vec::new();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(invalid(format!("edge ({u}, {v}) out of range for n = {n}")));
            }
            if u == v {
                return Err(invalid(format!("self-loop at node {u}")));
            }
            canon.push((u.min(v), u.max(v)));
        }
        canon.sort_unstable();
        if let Some(w) = canon.windows(2).find(|w| w[0] == w[1]) {
            return Err(invalid(format!("duplicate edge {:?}", w[0])));
        }
        Ok(Self::from_canonical(n, canon, None))
    }

    fn from_canonical(n: usize, edges: Vec<(usize, usize)>, kind: Option<GraphKind>) -> Self {
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v) in &edges {
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        let degree = adjacency.iter().map(Vec::len).collect();
        Graph { n, edges, degree, adjacency, kind }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degree(&self, u: usize) -> usize {
        self.degree[u]
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degree
    }

    pub fn max_degree(&self) -> usize {
        self.degree.iter().copied().max().unwrap_or(0)
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.adjacency[u]
    }

    /// The family this graph was generated from, if any.
    pub fn kind(&self) -> Option<GraphKind> {
        self.kind
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.n && self.adjacency[u].binary_search(&v).is_ok()
    }

    pub fn is_regular(&self) -> bool {
        self.degree.windows(2).all(|w| w[0] == w[1])
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &self.adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.n
    }

    /// Applies `perm` (old id -> new id) to every node.
    pub fn relabeled(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(invalid("permutation length does not match node count"));
        }
        let mut g = Graph::from_edges(self.n, self.edges.iter().map(|&(u, v)| (perm[u], perm[v])))?;
        g.kind = self.kind;
        Ok(g)
    }
}

/// Builds a connected graph of the requested family.
///
/// `d` is only read for [`GraphKind::RandomRegular`]. Cycles on two nodes
/// collapse to a single edge; tori need `n = s²` with side `s ≥ 3`.
/// Random regular graphs accept a pairing only if it is simple, which
/// happens with probability about `exp(-(d²-1)/4)`, so degrees above 5
/// routinely exhaust [`MAX_PAIRING_ATTEMPTS`].
pub fn build_graph(kind: GraphKind, n: usize, d: usize, seed: u64) -> Result<Graph> {
    if n < 2 {
        return Err(invalid(format!("n must be at least 2, got {n}")));
    }
    let edges = match kind {
        GraphKind::Complete => (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect(),
        GraphKind::Cycle => {
            if n == 2 {
                vec![(0, 1)]
            } else {
                let mut e: Vec<_> = (0..n).map(|u| (u.min((u + 1) % n), u.max((u + 1) % n))).collect();
                e.sort_unstable();
                e
            }
        }
        GraphKind::Hypercube => {
            if !n.is_power_of_two() {
                return Err(invalid(format!("hypercube needs a power of two, got {n}")));
            }
            let dim = n.trailing_zeros();
            let mut e = Vec::with_capacity(n * dim as usize / 2);
            for u in 0..n {
                for b in 0..dim {
                    let v = u ^ (1 << b);
                    if u < v {
                        e.push((u, v));
                    }
                }
            }
            e.sort_unstable();
            e
        }
        GraphKind::Torus => {
            let side = integer_sqrt(n);
            if side * side != n || side < 3 {
                return Err(invalid(format!("torus needs n = s*s with s >= 3, got {n}")));
            }
            let mut e = Vec::with_capacity(2 * n);
            for r in 0..side {
                for c in 0..side {
                    let u = r * side + c;
                    for v in [r * side + (c + 1) % side, ((r + 1) % side) * side + c] {
                        e.push((u.min(v), u.max(v)));
                    }
                }
            }
            e.sort_unstable();
            e
        }
        GraphKind::RandomRegular => return random_regular(n, d, seed),
    };
    Ok(Graph::from_canonical(n, edges, Some(kind)))
}

fn integer_sqrt(n: usize) -> usize {
    let mut s = libm::sqrt(n as f64) as usize;
    while s * s > n {
        s -= 1;
    }
    while (s + 1) * (s + 1) <= n {
        s += 1;
    }
    s
}

/// Pairing model with full rejection of loops and multi-edges, retried until
/// the result is simple and connected.
fn random_regular(n: usize, d: usize, seed: u64) -> Result<Graph> {
    if d == 0 || d >= n || (n * d) % 2 != 0 {
        return Err(invalid(format!(
            "random regular graph needs 0 < d < n and n*d even, got n = {n}, d = {d}"
        )));
    }
    let mut rng = rng::seeded(seed);
    let mut points: Vec<usize> = (0..n).flat_map(|u| core::iter::repeat_n(u, d)).collect();
    'attempt: for _ in 0..MAX_PAIRING_ATTEMPTS {
        points.shuffle(&mut rng);
        let mut edges = Vec::with_capacity(n * d / 2);
        for pair in points.chunks_exact(2) {
            let (u, v) = (pair[0], pair[1]);
            if u == v {
                continue 'attempt;
            }
            edges.push((u.min(v), u.max(v)));
        }
        edges.sort_unstable();
        if edges.windows(2).any(|w| w[0] == w[1]) {
            continue;
        }
        let g = Graph::from_canonical(n, edges, Some(GraphKind::RandomRegular));
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(Error::GenerationFailure { attempts: MAX_PAIRING_ATTEMPTS })
}

/// Dense lazy diffusion matrix `I - D/(2Δ) + A/(2Δ)` with every edge active
/// and `Δ` the maximum degree.
pub fn lazy_diffusion_matrix(g: &Graph) -> DMatrix<f64> {
    let n = g.n();
    let delta = g.max_degree().max(1) as f64;
    let w = 1.0 / (2.0 * delta);
    let mut p = DMatrix::<f64>::zeros(n, n);
    for u in 0..n {
        p[(u, u)] = 1.0 - g.degree(u) as f64 * w;
    }
    for &(u, v) in g.edges() {
        p[(u, v)] = w;
        p[(v, u)] = w;
    }
    p
}

/// Eigenvalues of [`lazy_diffusion_matrix`], sorted in decreasing order.
pub fn lazy_diffusion_eigenvalues(g: &Graph) -> Vec<f64> {
    let eig = lazy_diffusion_matrix(g).symmetric_eigen();
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    values.sort_unstable_by(|a, b| b.total_cmp(a));
    values
}

/// Second-largest eigenvalue of the lazy diffusion matrix.
pub fn second_eigenvalue(g: &Graph) -> Result<f64> {
    if !g.is_connected() {
        return Err(Error::Disconnected);
    }
    let values = lazy_diffusion_eigenvalues(g);
    Ok(values.get(1).copied().unwrap_or(0.0).clamp(0.0, 1.0))
}

/// `1 - λ₂` of the lazy diffusion matrix.
pub fn spectral_gap(g: &Graph) -> Result<f64> {
    second_eigenvalue(g).map(|l2| 1.0 - l2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-10
    }

    #[test]
    fn complete_graph_counts() {
        let g = build_graph(GraphKind::Complete, 4, 0, 0).unwrap();
        assert_eq!(g.edges().len(), 6);
        assert!(g.degrees().iter().all(|&d| d == 3));
    }

    #[test]
    fn cycle_counts() {
        let g = build_graph(GraphKind::Cycle, 5, 0, 0).unwrap();
        assert_eq!(g.edges().len(), 5);
        assert!(g.degrees().iter().all(|&d| d == 2));
        let k2 = build_graph(GraphKind::Cycle, 2, 0, 0).unwrap();
        assert_eq!(k2.edges(), &[(0, 1)]);
    }

    #[test]
    fn random_regular_is_simple_and_connected() {
        let g = build_graph(GraphKind::RandomRegular, 8, 3, 1).unwrap();
        assert_eq!(g.degrees().iter().sum::<usize>(), 24);
        assert!(g.degrees().iter().all(|&d| d == 3));
        assert!(g.is_connected());
        assert!(Graph::from_edges(8, g.edges().iter().copied()).is_ok());
    }

    #[test]
    fn hypercube_and_torus() {
        let h = build_graph(GraphKind::Hypercube, 16, 0, 0).unwrap();
        assert_eq!(h.edges().len(), 32);
        assert!(h.degrees().iter().all(|&d| d == 4));
        let t = build_graph(GraphKind::Torus, 16, 0, 0).unwrap();
        assert_eq!(t.edges().len(), 32);
        assert!(t.degrees().iter().all(|&d| d == 4));
        assert!(t.is_connected());
    }

    #[test]
    fn invalid_parameters() {
        assert!(build_graph(GraphKind::Complete, 1, 0, 0).is_err());
        assert!(build_graph(GraphKind::Hypercube, 12, 0, 0).is_err());
        assert!(build_graph(GraphKind::Torus, 8, 0, 0).is_err());
        assert!(build_graph(GraphKind::Torus, 4, 0, 0).is_err());
        assert!(build_graph(GraphKind::RandomRegular, 7, 3, 0).is_err());
        assert!(build_graph(GraphKind::RandomRegular, 4, 4, 0).is_err());
        assert!(Graph::from_edges(3, [(0, 0)]).is_err());
        assert!(Graph::from_edges(3, [(0, 1), (1, 0)]).is_err());
        assert!(Graph::from_edges(3, [(0, 3)]).is_err());
    }

    #[test]
    fn gap_of_k4_and_c4() {
        let k4 = build_graph(GraphKind::Complete, 4, 0, 0).unwrap();
        assert!(close(second_eigenvalue(&k4).unwrap(), 1.0 / 3.0));
        assert!(close(spectral_gap(&k4).unwrap(), 2.0 / 3.0));
        let c4 = build_graph(GraphKind::Cycle, 4, 0, 0).unwrap();
        assert!(close(spectral_gap(&c4).unwrap(), 0.5));
    }

    #[test]
    fn gap_of_k2_is_one() {
        // P = [[1/2, 1/2], [1/2, 1/2]] has eigenvalues {1, 0}.
        let k2 = build_graph(GraphKind::Complete, 2, 0, 0).unwrap();
        assert!(close(second_eigenvalue(&k2).unwrap(), 0.0));
        assert!(close(spectral_gap(&k2).unwrap(), 1.0));
    }

    #[test]
    fn disconnected_gap_is_an_error() {
        let g = Graph::from_edges(4, [(0, 1), (2, 3)]).unwrap();
        assert_eq!(spectral_gap(&g), Err(Error::Disconnected));
    }

    #[test]
    fn kind_round_trips_through_strings() {
        for k in GraphKind::ALL {
            assert_eq!(k.as_str().parse::<GraphKind>().unwrap(), k);
        }
        assert!("petersen".parse::<GraphKind>().is_err());
    }
}
