//! Parallel drivers for the statistical checks. Replicas are split into
//! fixed ranges, run on the thread pool and merged by adding counts, so the
//! result equals a single sequential run over all replicas.

use std::ops::Range;

use anyhow::Result;
use plurality_core::oracle::{
    association_counts, association_reports, chernoff_report, default_oracle_gamma, marginal_counts, tail_histogram, AssociationCounts,
    MarginalCounts, StatTestReport, TailHistogram, TrackedSetup,
};
use plurality_core::smoothing::{default_epsilon, estimate_mixing_time};
use plurality_core::PatternSpec;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Replicas per work item.
pub const CHUNK: u64 = 2_000;

fn chunks(samples: u64) -> Vec<Range<u64>> {
    (0..samples.div_ceil(CHUNK)).map(|i| i * CHUNK..((i + 1) * CHUNK).min(samples)).collect()
}

pub fn par_marginal(setup: &TrackedSetup, t: u64, samples: u64) -> Result<MarginalCounts> {
    let parts: Vec<MarginalCounts> = chunks(samples).into_par_iter().map(|r| marginal_counts(setup, t, r)).collect::<Result<_, _>>()?;
    let mut total = MarginalCounts { shuffle: vec![0; setup.n()], walk: vec![0; setup.n()], samples: 0 };
    parts.iter().for_each(|p| total.merge(p));
    Ok(total)
}

pub fn par_association(setup: &TrackedSetup, targets: &[Vec<usize>], t: u64, samples: u64) -> Result<AssociationCounts> {
    let parts: Vec<AssociationCounts> =
        chunks(samples).into_par_iter().map(|r| association_counts(setup, targets, t, r)).collect::<Result<_, _>>()?;
    let mut total = AssociationCounts { joint: vec![0; targets.len()], samples: 0 };
    parts.iter().for_each(|p| total.merge(p));
    Ok(total)
}

pub fn par_tail(setup: &TrackedSetup, u: usize, t_mix: u64, trade_off: u64, samples: u64) -> Result<TailHistogram> {
    let parts: Vec<TailHistogram> =
        chunks(samples).into_par_iter().map(|r| tail_histogram(setup, u, t_mix, trade_off, r)).collect::<Result<_, _>>()?;
    let mut total = TailHistogram { counts: vec![0; setup.placements().len() * trade_off as usize + 1], samples: 0 };
    parts.iter().for_each(|p| total.merge(p));
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub samples: u64,
    pub seed: u64,
    /// Tolerance for `t_mix`; `n^-5` when absent.
    pub epsilon: Option<f64>,
    pub mixing_horizon: u64,
    pub mixing_trials: u64,
    /// Number of `t_mix` periods summed by the tail check.
    pub trade_off: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { samples: 100_000, seed: 0, epsilon: None, mixing_horizon: 10_000, mixing_trials: 32, trade_off: 5 }
    }
}

/// A report together with the configuration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub config: String,
    pub report: StatTestReport,
}

pub fn pattern_t_mix(pattern: &PatternSpec, opts: &VerifyOptions) -> Result<u64> {
    let eps = opts.epsilon.unwrap_or_else(|| default_epsilon(pattern.n()));
    Ok(estimate_mixing_time(pattern, eps, opts.mixing_horizon, opts.mixing_trials)?.t_mix)
}

/// One token started at node 0, compared at `t = t_mix`.
pub fn marginal_suite(pattern: &PatternSpec, opts: &VerifyOptions) -> Result<Vec<SuiteEntry>> {
    let t = pattern_t_mix(pattern, opts)?;
    let setup = TrackedSetup::new(pattern, t, default_oracle_gamma(pattern), vec![0], opts.seed)?;
    let report = par_marginal(&setup, t, opts.samples)?.report();
    Ok(vec![SuiteEntry { config: format!("start=0 t={t}"), report }])
}

/// Token sets of size 2 and 3, target sets of size 1 and 2, at `t = 1` and
/// `t = 5`.
pub fn association_suite(pattern: &PatternSpec, opts: &VerifyOptions) -> Result<Vec<SuiteEntry>> {
    let n = pattern.n();
    let placements: Vec<Vec<usize>> = vec![vec![0, 0], vec![0, 1 % n], vec![0, 0, 1 % n], vec![0, 1 % n, 2 % n]];
    let targets: Vec<Vec<usize>> = vec![vec![0], vec![1 % n], vec![0, 1 % n], vec![1 % n, 2 % n]];
    let mut out = Vec::new();
    for t in [1, 5] {
        for b in &placements {
            let setup = TrackedSetup::new(pattern, t, default_oracle_gamma(pattern), b.clone(), opts.seed)?;
            let counts = par_association(&setup, &targets, t, opts.samples)?;
            for (d, report) in targets.iter().zip(association_reports(&setup, &targets, t, &counts)) {
                out.push(SuiteEntry { config: format!("B={b:?} D={d:?} t={t}"), report });
            }
        }
    }
    Ok(out)
}

/// One tracked token per node, counted at node 0 over `T` periods of
/// `t_mix`, for `δ ∈ {0.5, 1, 2}`.
pub fn chernoff_suite(pattern: &PatternSpec, opts: &VerifyOptions) -> Result<Vec<SuiteEntry>> {
    let n = pattern.n();
    let t_mix = pattern_t_mix(pattern, opts)?;
    let placements: Vec<usize> = (0..n).collect();
    let setup = TrackedSetup::new(pattern, t_mix * opts.trade_off, default_oracle_gamma(pattern), placements, opts.seed)?;
    let hist = par_tail(&setup, 0, t_mix, opts.trade_off, opts.samples)?;
    Ok([0.5, 1.0, 2.0]
        .into_iter()
        .map(|delta| SuiteEntry {
            config: format!("|B|={n} u=0 t_mix={t_mix} T={} delta={delta}", opts.trade_off),
            report: chernoff_report(&hist, n, n, opts.trade_off, delta),
        })
        .collect())
}
