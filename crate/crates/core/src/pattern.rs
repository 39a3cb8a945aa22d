//! Communication patterns: which edges are active in each round.
//!
//! Self-loops are implicit. Every node is always its own neighbor and
//! [`ActiveEdgeSet`] only stores the pairs `u != v`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::{Graph, GraphKind};
use crate::rng;

pub type Matching = Vec<(usize, usize)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Diffusion,
    RandomMatching,
    BalancingCircuit,
    Sequential,
}

impl Model {
    pub const ALL: [Model; 4] = [
        Model::Diffusion,
        Model::RandomMatching,
        Model::BalancingCircuit,
        Model::Sequential,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Model::Diffusion => "diffusion",
            Model::RandomMatching => "random_matching",
            Model::BalancingCircuit => "balancing_circuit",
            Model::Sequential => "sequential",
        }
    }

    pub fn is_randomized(self) -> bool {
        matches!(self, Model::RandomMatching | Model::Sequential)
    }

    pub fn is_matching_based(self) -> bool {
        !matches!(self, Model::Diffusion)
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Model::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| invalid(format!("unknown communication model `{s}`")))
    }
}

/// The active edges of one round, canonical `(u, v)` with `u < v`, sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActiveEdgeSet {
    pub round: u64,
    pub active: Vec<(usize, usize)>,
}

impl ActiveEdgeSet {
    pub fn new(round: u64, mut active: Vec<(usize, usize)>) -> Self {
        for e in &mut active {
            if e.0 > e.1 {
                *e = (e.1, e.0);
            }
        }
        active.sort_unstable();
        active.dedup();
        ActiveEdgeSet { round, active }
    }

    pub fn empty(round: u64) -> Self {
        ActiveEdgeSet { round, active: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn contains(&self, u: usize, v: usize) -> bool {
        self.active.binary_search(&(u.min(v), u.max(v))).is_ok()
    }

    /// `d_t(u)` for every node.
    pub fn active_degrees(&self, n: usize) -> Vec<usize> {
        let mut deg = vec![0; n];
        for &(u, v) in &self.active {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    /// Sorted active neighbors `N_t(u)` (excluding `u` itself).
    pub fn neighbor_lists(&self, n: usize) -> Vec<Vec<usize>> {
        let mut lists = vec![Vec::new(); n];
        for &(u, v) in &self.active {
            lists[u].push(v);
            lists[v].push(u);
        }
        for l in &mut lists {
            l.sort_unstable();
        }
        lists
    }

    /// No node appears in two pairs.
    pub fn is_matching(&self, n: usize) -> bool {
        self.active_degrees(n).iter().all(|&d| d <= 1)
    }
}

/// A communication pattern `(M_t)` over a graph.
#[derive(Debug, Clone)]
pub struct PatternSpec {
    model: Model,
    graph: Graph,
    matchings: Vec<Matching>,
    matching_probability: f64,
    seed: u64,
}

impl PatternSpec {
    pub fn diffusion(graph: Graph, seed: u64) -> Self {
        PatternSpec { model: Model::Diffusion, graph, matchings: Vec::new(), matching_probability: 1.0, seed }
    }

    pub fn sequential(graph: Graph, seed: u64) -> Result<Self> {
        if graph.edges().is_empty() {
            return Err(invalid("sequential model needs at least one edge"));
        }
        Ok(PatternSpec { model: Model::Sequential, graph, matchings: Vec::new(), matching_probability: 1.0, seed })
    }

    pub fn random_matching(graph: Graph, matching_probability: f64, seed: u64) -> Result<Self> {
        if !(matching_probability > 0.0 && matching_probability <= 1.0) {
            return Err(invalid(format!("matching probability must lie in (0, 1], got {matching_probability}")));
        }
        Ok(PatternSpec { model: Model::RandomMatching, graph, matchings: Vec::new(), matching_probability, seed })
    }

    /// Validates that every matching is a perfect matching of `graph`.
    pub fn balancing_circuit(graph: Graph, matchings: Vec<Matching>, seed: u64) -> Result<Self> {
        let n = graph.n();
        if n % 2 != 0 {
            return Err(invalid("balancing circuit needs an even node count"));
        }
        if matchings.is_empty() {
            return Err(invalid("balancing circuit needs at least one matching"));
        }
        let mut canon = Vec::with_capacity(matchings.len());
        for (i, m) in matchings.into_iter().enumerate() {
            let mut covered = vec![false; n];
            let mut out = Vec::with_capacity(m.len());
            for (u, v) in m {
                if !graph.has_edge(u, v) {
                    return Err(invalid(format!("matching {i} uses non-edge ({u}, {v})")));
                }
                if core::mem::replace(&mut covered[u], true) || core::mem::replace(&mut covered[v], true) {
                    return Err(invalid(format!("matching {i} covers a node twice")));
                }
                out.push((u.min(v), u.max(v)));
            }
            if covered.iter().any(|c| !c) {
                return Err(invalid(format!("matching {i} is not perfect")));
            }
            out.sort_unstable();
            canon.push(out);
        }
        Ok(PatternSpec { model: Model::BalancingCircuit, graph, matchings: canon, matching_probability: 1.0, seed })
    }

    /// Convenience constructor; the balancing circuit uses
    /// [`circuit_matchings`] for the graph's family.
    pub fn for_model(model: Model, graph: Graph, matching_probability: f64, seed: u64) -> Result<Self> {
        match model {
            Model::Diffusion => Ok(Self::diffusion(graph, seed)),
            Model::Sequential => Self::sequential(graph, seed),
            Model::RandomMatching => Self::random_matching(graph, matching_probability, seed),
            Model::BalancingCircuit => {
                let m = circuit_matchings(&graph)?;
                Self::balancing_circuit(graph, m, seed)
            }
        }
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn matchings(&self) -> &[Matching] {
        &self.matchings
    }

    pub fn matching_probability(&self) -> f64 {
        self.matching_probability
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        PatternSpec { seed, ..self.clone() }
    }

    /// Length of the cycle after which the pattern repeats, for
    /// deterministic models.
    pub fn period(&self) -> Option<u64> {
        match self.model {
            Model::Diffusion => Some(1),
            Model::BalancingCircuit => Some(self.matchings.len() as u64),
            _ => None,
        }
    }

    /// Active edges at round `t`. The randomness of round `t` comes from its
    /// own stream of `seed`, so rounds can be generated in any order.
    pub fn generate(&self, t: u64) -> ActiveEdgeSet {
        match self.model {
            Model::Diffusion => ActiveEdgeSet { round: t, active: self.graph.edges().to_vec() },
            Model::BalancingCircuit => {
                let idx = (t % self.matchings.len() as u64) as usize;
                ActiveEdgeSet { round: t, active: self.matchings[idx].clone() }
            }
            Model::Sequential => {
                let mut rng = rng::stream_rng(self.seed, t);
                let edges = self.graph.edges();
                let e = edges[rng.random_range(0..edges.len())];
                ActiveEdgeSet { round: t, active: vec![e] }
            }
            Model::RandomMatching => {
                let mut rng = rng::stream_rng(self.seed, t);
                let mut order: Vec<usize> = (0..self.graph.edges().len()).collect();
                order.shuffle(&mut rng);
                let mut matched = vec![false; self.graph.n()];
                let mut active = Vec::new();
                for i in order {
                    let (u, v) = self.graph.edges()[i];
                    if matched[u] || matched[v] {
                        continue;
                    }
                    if self.matching_probability >= 1.0 || rng.random_bool(self.matching_probability) {
                        matched[u] = true;
                        matched[v] = true;
                        active.push((u, v));
                    }
                }
                active.sort_unstable();
                ActiveEdgeSet { round: t, active }
            }
        }
    }
}

/// A-priori bound on the active degree of the model.
pub fn max_active_degree(spec: &PatternSpec) -> usize {
    match spec.model {
        Model::Diffusion => spec.graph.max_degree(),
        _ => 1,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PminEstimate {
    pub value: f64,
    pub samples: u64,
    /// Activation frequency of each graph edge, in edge order.
    pub frequencies: Vec<f64>,
}

/// Monte Carlo estimate of the minimum per-edge activation probability over
/// rounds `1..=samples`.
pub fn empirical_pmin(spec: &PatternSpec, samples: u64) -> Result<PminEstimate> {
    if spec.model != Model::RandomMatching {
        return Err(Error::WrongModel { expected: "random_matching" });
    }
    if samples == 0 {
        return Err(invalid("empirical p_min needs at least one sample"));
    }
    let edges = spec.graph.edges();
    let mut hits = vec![0u64; edges.len()];
    for t in 1..=samples {
        for e in spec.generate(t).active {
            let i = edges.binary_search(&e).expect("active edge belongs to the graph");
            hits[i] += 1;
        }
    }
    let frequencies: Vec<f64> = hits.iter().map(|&h| h as f64 / samples as f64).collect();
    let value = frequencies.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(PminEstimate { value, samples, frequencies })
}

/// Perfect matchings decomposing the edges of graphs from families with a
/// known 1-factorization: complete graphs and cycles on an even number of
/// nodes, hypercubes, and tori with an even side.
pub fn circuit_matchings(graph: &Graph) -> Result<Vec<Matching>> {
    let n = graph.n();
    let unsupported = || invalid("no perfect-matching decomposition known for this graph; supply matchings explicitly");
    match graph.kind() {
        _ if n % 2 != 0 => Err(invalid("balancing circuit needs an even node count")),
        Some(GraphKind::Complete) if n == 2 => Ok(vec![vec![(0, 1)]]),
        Some(GraphKind::Complete) => {
            // Round-robin 1-factorization, node n-1 fixed.
            let m = n - 1;
            Ok((0..m)
                .map(|r| {
                    let mut pairs = vec![(r, n - 1)];
                    for i in 1..n / 2 {
                        let a = (r + i) % m;
                        let b = (r + m - i) % m;
                        pairs.push((a.min(b), a.max(b)));
                    }
                    pairs.sort_unstable();
                    pairs
                })
                .collect())
        }
        Some(GraphKind::Cycle) if n == 2 => Ok(vec![vec![(0, 1)]]),
        Some(GraphKind::Cycle) => Ok((0..2)
            .map(|offset| {
                let mut pairs: Vec<_> = (0..n / 2)
                    .map(|i| {
                        let a = (2 * i + offset) % n;
                        let b = (2 * i + offset + 1) % n;
                        (a.min(b), a.max(b))
                    })
                    .collect();
                pairs.sort_unstable();
                pairs
            })
            .collect()),
        Some(GraphKind::Hypercube) => {
            let dim = n.trailing_zeros();
            Ok((0..dim)
                .map(|b| (0..n).filter(|u| u & (1 << b) == 0).map(|u| (u, u | (1 << b))).collect())
                .collect())
        }
        Some(GraphKind::Torus) => {
            let side = (0..=n).find(|s| s * s == n).ok_or_else(unsupported)?;
            if side % 2 != 0 {
                return Err(unsupported());
            }
            let mut out = Vec::new();
            for offset in 0..2 {
                // horizontal
                let mut h = Vec::new();
                let mut v = Vec::new();
                for r in 0..side {
                    for i in 0..side / 2 {
                        let c = 2 * i + offset;
                        let a = r * side + c;
                        let b = r * side + (c + 1) % side;
                        h.push((a.min(b), a.max(b)));
                        let a = c * side + r;
                        let b = ((c + 1) % side) * side + r;
                        v.push((a.min(b), a.max(b)));
                    }
                }
                h.sort_unstable();
                v.sort_unstable();
                out.push(h);
                out.push(v);
            }
            Ok(out)
        }
        _ => Err(unsupported()),
    }
}
