//! Experiment configuration. Read from a TOML file; every command-line flag
//! overrides the key of the same name.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use plurality_core::{GraphKind, Model, Protocol};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub protocol: Protocol,
    pub model: Model,
    pub graph: GraphKind,
    /// Node counts of the sweep, one sweep point each.
    pub n: Vec<usize>,
    /// Degree of random regular graphs.
    pub d: usize,
    pub k: usize,
    /// Explicit per-opinion node counts; takes precedence over `alpha`.
    pub counts: Option<Vec<usize>>,
    pub alpha: Option<f64>,
    /// Trade-off parameter of the shuffle protocol.
    #[serde(rename = "T")]
    pub trade_off: u64,
    /// Target discrepancy of the balance protocol.
    pub g: Option<u64>,
    pub c: f64,
    /// Smoothing tolerance for `t_mix`; `n^-5` when absent.
    pub epsilon: Option<f64>,
    pub replicas: u64,
    pub seed: u64,
    /// Round limit of the balance protocol; `⌈64·n·log₂ n⌉` when absent.
    pub horizon: Option<u64>,
    pub out: Option<PathBuf>,
    pub matching_probability: f64,
    /// Overrides the computed number of tokens per node.
    pub gamma: Option<u64>,
    /// Skips the mixing-time estimate.
    pub t_mix: Option<u64>,
    /// Random window starts examined for randomized patterns.
    pub mixing_trials: u64,
    /// Longest window examined when estimating `t_mix`.
    pub mixing_horizon: u64,
    /// Reads the graph from an edge-list file instead of building `graph`.
    pub graph_file: Option<PathBuf>,
    /// Balancing-circuit matchings, one edge-list file each.
    pub matchings: Vec<PathBuf>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            protocol: Protocol::Shuffle,
            model: Model::Diffusion,
            graph: GraphKind::Complete,
            n: vec![16],
            d: 3,
            k: 2,
            counts: None,
            alpha: None,
            trade_off: 1,
            g: None,
            c: plurality_core::shuffle::DEFAULT_C,
            epsilon: None,
            replicas: 1,
            seed: 0,
            horizon: None,
            out: None,
            matching_probability: 1.0,
            gamma: None,
            t_mix: None,
            mixing_trials: 32,
            mixing_horizon: 10_000,
            graph_file: None,
            matchings: Vec::new(),
        }
    }
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).context("parsing experiment configuration")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(!self.n.is_empty(), "the sweep needs at least one node count");
        ensure!(self.k >= 1, "k must be at least 1");
        ensure!(self.replicas >= 1, "replicas must be at least 1");
        ensure!(self.trade_off >= 1, "T must be at least 1");
        ensure!(self.c > 0.0, "c must be positive");
        ensure!(
            self.matching_probability > 0.0 && self.matching_probability <= 1.0,
            "matching_probability must lie in (0, 1]"
        );
        if let Some(e) = self.epsilon {
            ensure!(e > 0.0, "epsilon must be positive");
        }
        match (&self.counts, self.alpha) {
            (Some(c), _) => {
                ensure!(c.len() == self.k, "counts has {} entries but k = {}", c.len(), self.k);
                ensure!(self.n.len() == 1, "explicit counts fix n, so the sweep must have a single size");
                ensure!(c.iter().sum::<usize>() == self.n[0], "counts sum to {} but n = {}", c.iter().sum::<usize>(), self.n[0]);
            }
            (None, Some(a)) => ensure!(a > 0.0 && a <= 1.0, "alpha must lie in (0, 1]"),
            (None, None) => bail!("give either counts or alpha"),
        }
        if self.graph_file.is_some() {
            ensure!(self.n.len() == 1, "a graph file fixes n, so the sweep must have a single size");
        }
        Ok(())
    }

    /// Per-opinion counts at sweep size `n`.
    pub fn counts_at(&self, n: usize) -> Result<Vec<usize>> {
        match (&self.counts, self.alpha) {
            (Some(c), _) => Ok(c.clone()),
            (None, Some(a)) => counts_from_alpha(n, self.k, a),
            (None, None) => bail!("give either counts or alpha"),
        }
    }
}

/// Counts with opinion 0 ahead of all others by at least `⌈α·n⌉` nodes and
/// the rest split as evenly as possible. Leftover nodes go to opinion 0, so
/// the realized bias can exceed `α`.
pub fn counts_from_alpha(n: usize, k: usize, alpha: f64) -> Result<Vec<usize>> {
    ensure!(k >= 1 && n >= 1, "need n, k >= 1");
    ensure!(alpha > 0.0 && alpha <= 1.0, "alpha must lie in (0, 1]");
    if k == 1 {
        return Ok(vec![n]);
    }
    let gap = ((alpha * n as f64 - 1e-9).ceil() as usize).max(1);
    ensure!(gap <= n, "alpha = {alpha} is too large for n = {n}");
    let rest = n - gap;
    let base = rest / k;
    let mut counts = vec![base; k];
    counts[0] += gap + rest % k;
    Ok(counts)
}
