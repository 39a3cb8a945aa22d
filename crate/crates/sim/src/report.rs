//! Measured consensus times against the predicted growth of each
//! communication model.

use anyhow::{ensure, Result};
use plurality_core::Model;
use serde::{Deserialize, Serialize};

use crate::sweep::{median, Row};

/// Graph quantities the predicted forms depend on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphParams {
    pub lambda2: f64,
    pub degree: usize,
    /// Only read for random matchings.
    pub p_min: Option<f64>,
}

/// `T·log₂ n/(1-λ₂)` scaled by the model's slowdown: `1/(d·p_min)` for random
/// matchings, `d` for balancing circuits and `n` for the sequential model.
pub fn predicted_time(model: Model, n: usize, trade_off: u64, g: &GraphParams) -> f64 {
    let base = trade_off as f64 * (n as f64).log2() / (1.0 - g.lambda2);
    match model {
        Model::Diffusion => base,
        Model::RandomMatching => base / (g.degree as f64 * g.p_min.unwrap_or(f64::NAN)),
        Model::BalancingCircuit => base * g.degree as f64,
        Model::Sequential => base * n as f64,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: usize,
    pub runs: usize,
    /// Median consensus round over runs that reached consensus.
    pub measured: f64,
    pub predicted: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub model: Model,
    pub rows: Vec<ScalingRow>,
    /// Largest over smallest positive ratio; 1 means the prediction has the
    /// right shape up to a constant.
    pub ratio_spread: f64,
}

/// Consensus rounds at one size.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeMeasurement {
    pub n: usize,
    pub consensus_rounds: Vec<u64>,
    pub graph: GraphParams,
}

pub fn scaling_report(model: Model, trade_off: u64, sizes: &[SizeMeasurement]) -> Result<ScalingReport> {
    let mut distinct: Vec<usize> = sizes.iter().map(|s| s.n).collect();
    distinct.sort_unstable();
    distinct.dedup();
    ensure!(distinct.len() >= 3, "a scaling report needs at least 3 sizes, got {}", distinct.len());
    let mut rows: Vec<ScalingRow> = sizes
        .iter()
        .map(|s| {
            let mut rounds: Vec<f64> = s.consensus_rounds.iter().map(|&r| r as f64).collect();
            let measured = median(&mut rounds).unwrap_or(f64::NAN);
            let predicted = predicted_time(model, s.n, trade_off, &s.graph);
            let ratio = if measured == 0.0 { 0.0 } else { measured / predicted };
            ScalingRow { n: s.n, runs: s.consensus_rounds.len(), measured, predicted, ratio }
        })
        .collect();
    rows.sort_by_key(|r| r.n);
    let positive: Vec<f64> = rows.iter().map(|r| r.ratio).filter(|&r| r > 0.0 && r.is_finite()).collect();
    let ratio_spread = if positive.is_empty() {
        f64::NAN
    } else {
        positive.iter().cloned().fold(f64::MIN, f64::max) / positive.iter().cloned().fold(f64::MAX, f64::min)
    };
    Ok(ScalingReport { model, rows, ratio_spread })
}

/// Groups CSV rows of one model by size.
pub fn measurements_from_rows(rows: &[Row], model: Model, params: impl Fn(usize) -> Result<GraphParams>) -> Result<Vec<SizeMeasurement>> {
    let mut sizes: Vec<usize> = rows.iter().filter(|r| r.model == model).map(|r| r.n).collect();
    sizes.sort_unstable();
    sizes.dedup();
    sizes
        .into_iter()
        .map(|n| {
            let consensus_rounds = rows.iter().filter(|r| r.model == model && r.n == n).filter_map(|r| r.consensus_round).collect();
            Ok(SizeMeasurement { n, consensus_rounds, graph: params(n)? })
        })
        .collect()
}

/// Per-size factor between the measured times of two reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Separation {
    pub n: usize,
    pub slow: f64,
    pub fast: f64,
    pub factor: f64,
    /// `factor ∈ [n/8, 8n]`.
    pub within: bool,
}

pub fn separation(slow: &ScalingReport, fast: &ScalingReport) -> Vec<Separation> {
    slow.rows
        .iter()
        .filter_map(|s| {
            let f = fast.rows.iter().find(|f| f.n == s.n)?;
            let factor = s.measured / f.measured;
            let n = s.n as f64;
            Some(Separation { n: s.n, slow: s.measured, fast: f.measured, factor, within: factor >= n / 8.0 && factor <= 8.0 * n })
        })
        .collect()
}
