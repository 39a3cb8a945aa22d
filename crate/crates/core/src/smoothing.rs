//! Transition matrices `P_t`, window products, discrepancy and the
//! ε-smoothing mixing time.
//!
//! Products use the row-vector convention: a load vector `x` evolves as
//! `x · P_{t1} · … · P_{t2}`.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::pattern::{max_active_degree, ActiveEdgeSet, PatternSpec};
use crate::rng;

/// `P_t` for one round. Entries are exact: integer numerators over the
/// common denominator `2Δ`. Rows are sparse and include the diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionMatrix {
    n: usize,
    delta: usize,
    rows: Vec<Vec<(usize, u64)>>,
}

impl TransitionMatrix {
    /// Off-diagonal active entries are `1/(2Δ)`, the diagonal is
    /// `1 - d_t(u)/(2Δ)`, everything else is zero.
    pub fn from_active(active: &ActiveEdgeSet, n: usize, delta: usize) -> Result<Self> {
        if delta == 0 {
            return Err(invalid("Δ must be at least 1"));
        }
        let neighbors = active.neighbor_lists(n);
        let denom = 2 * delta as u64;
        let mut rows = Vec::with_capacity(n);
        for (u, nbrs) in neighbors.into_iter().enumerate() {
            let d = nbrs.len();
            if d > delta {
                return Err(Error::DeltaTooSmall { node: u, degree: d, delta });
            }
            let mut row: Vec<(usize, u64)> = nbrs.into_iter().map(|v| (v, 1)).collect();
            let pos = row.partition_point(|&(v, _)| v < u);
            row.insert(pos, (u, denom - d as u64));
            rows.push(row);
        }
        Ok(TransitionMatrix { n, delta, rows })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn delta(&self) -> usize {
        self.delta
    }

    /// The common denominator `2Δ`.
    pub fn denominator(&self) -> u64 {
        2 * self.delta as u64
    }

    /// Nonzero entries of row `u` as `(column, numerator)`, sorted by column.
    pub fn row(&self, u: usize) -> &[(usize, u64)] {
        &self.rows[u]
    }

    pub fn numerator(&self, u: usize, v: usize) -> u64 {
        let row = &self.rows[u];
        row.binary_search_by_key(&v, |&(c, _)| c).map(|i| row[i].1).unwrap_or(0)
    }

    pub fn entry(&self, u: usize, v: usize) -> f64 {
        self.numerator(u, v) as f64 / self.denominator() as f64
    }

    pub fn active_degree(&self, u: usize) -> usize {
        self.rows[u].len() - 1
    }

    /// Row-major dense numerators.
    pub fn dense_numerators(&self) -> Vec<u64> {
        let mut out = vec![0; self.n * self.n];
        for (u, row) in self.rows.iter().enumerate() {
            for &(v, w) in row {
                out[u * self.n + v] = w;
            }
        }
        out
    }
}

/// `P_t` for round `t` of `spec`, using the model's a-priori `Δ`.
pub fn transition_at(spec: &PatternSpec, t: u64) -> TransitionMatrix {
    TransitionMatrix::from_active(&spec.generate(t), spec.n(), max_active_degree(spec))
        .expect("generated patterns respect the model's Δ")
}

/// Floating-point window product `P_start · … · P_end`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowProduct {
    pub start: u64,
    pub end: u64,
    factors: u64,
    n: usize,
    entries: Vec<f64>,
}

impl WindowProduct {
    /// The empty product (identity) of a window that will begin at `start`.
    pub fn identity(n: usize, start: u64) -> Self {
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            entries[i * n + i] = 1.0;
        }
        WindowProduct { start, end: start.saturating_sub(1), factors: 0, n, entries }
    }

    pub fn from_dense(n: usize, start: u64, end: u64, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n * n {
            return Err(invalid("dense product has the wrong size"));
        }
        if end + 1 < start {
            return Err(invalid("window end before start"));
        }
        Ok(WindowProduct { start, end, factors: end + 1 - start, n, entries })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of factors.
    pub fn len(&self) -> u64 {
        self.factors
    }

    pub fn is_empty(&self) -> bool {
        self.factors == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Right-multiplies by the next factor: `Π ← Π · P`.
    pub fn push(&mut self, p: &TransitionMatrix) {
        let n = self.n;
        let denom = p.denominator() as f64;
        let mut next = vec![0.0; n * n];
        // P is symmetric, so column v of P is row v.
        for v in 0..n {
            for &(u, w) in p.row(v) {
                let w = w as f64 / denom;
                for i in 0..n {
                    next[i * n + v] += self.entries[i * n + u] * w;
                }
            }
        }
        self.entries = next;
        self.end = self.start + self.factors;
        self.factors += 1;
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.entries.chunks_exact(self.n).map(|r| r.iter().sum()).collect()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        (0..self.n).map(|j| (0..self.n).map(|i| self.get(i, j)).sum()).collect()
    }

    fn column_pair_distance(&self, j1: usize, j2: usize) -> f64 {
        0.5 * (0..self.n).map(|i| (self.get(i, j1) - self.get(i, j2)).abs()).sum::<f64>()
    }
}

/// Product over `[t1, t2]` (inclusive, `t2 - t1 + 1` factors).
pub fn window_product(spec: &PatternSpec, t1: u64, t2: u64) -> Result<WindowProduct> {
    if t1 > t2 {
        return Err(invalid("window start after end"));
    }
    let mut w = WindowProduct::identity(spec.n(), t1);
    for t in t1..=t2 {
        w.push(&transition_at(spec, t));
    }
    Ok(w)
}

/// `sup { disc(x · Π) : x ∈ [0, 1]^n }`, which for a product with equal
/// column sums is the largest half-L1 distance between two columns.
pub fn window_discrepancy(w: &WindowProduct) -> f64 {
    let mut best: f64 = 0.0;
    for j1 in 0..w.n {
        for j2 in j1 + 1..w.n {
            best = best.max(w.column_pair_distance(j1, j2));
        }
    }
    best
}

/// `window_discrepancy(w) <= epsilon`, stopping at the first violating pair.
pub fn discrepancy_within(w: &WindowProduct, epsilon: f64) -> bool {
    (0..w.n).all(|j1| (j1 + 1..w.n).all(|j2| w.column_pair_distance(j1, j2) <= epsilon))
}

/// A nonnegative rational `numer / denom`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExactRatio {
    pub numer: u128,
    pub denom: u128,
}

impl ExactRatio {
    pub fn to_f64(self) -> f64 {
        self.numer as f64 / self.denom as f64
    }

    /// `self <= other` by cross-multiplication.
    pub fn le(self, other: ExactRatio) -> bool {
        self.numer * other.denom <= other.numer * self.denom
    }
}

/// Exact window product: integer numerators over a common denominator equal
/// to the product of the factors' `2Δ`. Fails once the numbers no longer fit
/// in 128 bits, so this is meant for short windows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactWindowProduct {
    pub start: u64,
    pub end: u64,
    factors: u64,
    n: usize,
    numer: Vec<u128>,
    denom: u128,
}

impl ExactWindowProduct {
    pub fn identity(n: usize, start: u64) -> Self {
        let mut numer = vec![0; n * n];
        for i in 0..n {
            numer[i * n + i] = 1;
        }
        ExactWindowProduct { start, end: start.saturating_sub(1), factors: 0, n, numer, denom: 1 }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn denominator(&self) -> u128 {
        self.denom
    }

    pub fn numerator(&self, i: usize, j: usize) -> u128 {
        self.numer[i * self.n + j]
    }

    pub fn push(&mut self, p: &TransitionMatrix) -> Result<()> {
        let n = self.n;
        let overflow = || Error::ExactOverflow { steps: self.factors as usize + 1 };
        let denom = self.denom.checked_mul(p.denominator() as u128).ok_or_else(overflow)?;
        let mut next = vec![0u128; n * n];
        for v in 0..n {
            for &(u, w) in p.row(v) {
                for i in 0..n {
                    let term = self.numer[i * n + u].checked_mul(w as u128).ok_or_else(overflow)?;
                    next[i * n + v] = next[i * n + v].checked_add(term).ok_or_else(overflow)?;
                }
            }
        }
        self.numer = next;
        self.denom = denom;
        self.end = self.start + self.factors;
        self.factors += 1;
        Ok(())
    }

    /// Every row and column sums to exactly one.
    pub fn is_doubly_stochastic(&self) -> bool {
        let n = self.n;
        (0..n).all(|i| (0..n).map(|j| self.numerator(i, j)).sum::<u128>() == self.denom)
            && (0..n).all(|j| (0..n).map(|i| self.numerator(i, j)).sum::<u128>() == self.denom)
    }

    /// Exact counterpart of [`window_discrepancy`].
    pub fn discrepancy(&self) -> ExactRatio {
        let n = self.n;
        let mut best = 0u128;
        for j1 in 0..n {
            for j2 in j1 + 1..n {
                let l1: u128 = (0..n).map(|i| self.numerator(i, j1).abs_diff(self.numerator(i, j2))).sum();
                best = best.max(l1);
            }
        }
        ExactRatio { numer: best, denom: 2 * self.denom }
    }

    pub fn to_float(&self) -> WindowProduct {
        let d = self.denom as f64;
        WindowProduct {
            start: self.start,
            end: self.end,
            factors: self.factors,
            n: self.n,
            entries: self.numer.iter().map(|&x| x as f64 / d).collect(),
        }
    }
}

pub fn exact_window_product(spec: &PatternSpec, t1: u64, t2: u64) -> Result<ExactWindowProduct> {
    if t1 > t2 {
        return Err(invalid("window start after end"));
    }
    let mut w = ExactWindowProduct::identity(spec.n(), t1);
    for t in t1..=t2 {
        w.push(&transition_at(spec, t))?;
    }
    Ok(w)
}

/// Whether `[t1, t2]` is ε-smoothing under `spec`.
pub fn is_smoothing(spec: &PatternSpec, t1: u64, t2: u64, epsilon: f64) -> Result<bool> {
    Ok(discrepancy_within(&window_product(spec, t1, t2)?, epsilon))
}

/// `n^-5`, the tolerance used when none is given.
pub fn default_epsilon(n: usize) -> f64 {
    libm::pow(n as f64, -5.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingEstimate {
    /// Number of factors in an ε-smoothing window.
    pub t_mix: u64,
    pub epsilon: f64,
    /// True for deterministic patterns, where every window was examined.
    pub exact: bool,
    /// Number of window start offsets examined.
    pub trials: u64,
    /// Largest discrepancy among the examined windows of length `t_mix`.
    pub worst_discrepancy: f64,
}

/// Smallest window length (in factors) such that every examined window of
/// that length is ε-smoothing.
///
/// Deterministic patterns examine one full period of start offsets and need
/// the windows to end by `horizon`. Randomized patterns examine `trials`
/// start offsets drawn uniformly from `1..=horizon`; the answer is then an
/// estimate and is flagged as such.
pub fn estimate_mixing_time(spec: &PatternSpec, epsilon: f64, horizon: u64, trials: u64) -> Result<MixingEstimate> {
    if horizon == 0 {
        return Err(invalid("horizon must be at least 1"));
    }
    if !(epsilon > 0.0) {
        return Err(invalid("epsilon must be positive"));
    }
    let (starts, exact): (Vec<u64>, bool) = match spec.period() {
        Some(p) => ((1..=p.min(horizon)).collect(), true),
        None => {
            if trials == 0 {
                return Err(invalid("randomized patterns need at least one trial"));
            }
            let mut rng = rng::stream_rng(rng::derive_seed(spec.seed(), &[0x6d69_78]), 0);
            ((0..trials).map(|_| rng.random_range(1..=horizon)).collect(), false)
        }
    };
    let mut t_mix = 0;
    for &s in &starts {
        let max_len = if exact { horizon + 1 - s } else { horizon };
        let mut w = WindowProduct::identity(spec.n(), s);
        let mut found = None;
        for len in 1..=max_len {
            w.push(&transition_at(spec, s + len - 1));
            if len >= t_mix && discrepancy_within(&w, epsilon) {
                found = Some(len);
                break;
            }
        }
        match found {
            Some(len) => t_mix = t_mix.max(len),
            None => {
                return Err(Error::NotSmoothing { horizon, epsilon, best: window_discrepancy(&w) });
            }
        }
    }
    let mut worst: f64 = 0.0;
    for &s in &starts {
        worst = worst.max(window_discrepancy(&window_product(spec, s, s + t_mix - 1)?));
    }
    Ok(MixingEstimate { t_mix, epsilon, exact, trials: starts.len() as u64, worst_discrepancy: worst })
}
