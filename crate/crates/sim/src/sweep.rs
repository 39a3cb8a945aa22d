//! Seeded experiment sweeps. Replica `r` of sweep point `p` draws all of its
//! randomness from `derive_seed(master, [p, r])`, so results do not depend
//! on scheduling and rows come out sorted by `(p, r)`.

use std::io::Write;

use anyhow::{Context, Result};
use plurality_core::balance::{default_target_discrepancy, required_gamma_balance, run_balance, BalanceConfig};
use plurality_core::pattern::{circuit_matchings, max_active_degree};
use plurality_core::record::{block_assignment, initial_bias};
use plurality_core::rng::{derive_seed, seeded};
use plurality_core::shuffle::{required_gamma, run_shuffle, ShuffleConfig};
use plurality_core::smoothing::{default_epsilon, estimate_mixing_time};
use plurality_core::{build_graph, Graph, Model, PatternSpec, Protocol, RunRecord};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentSpec;
use crate::edgelist;

const GRAPH_STREAM: u64 = 1;
const PATTERN_STREAM: u64 = 2;
const ASSIGN_STREAM: u64 = 3;
const PROTOCOL_STREAM: u64 = 4;
const REPLICA_SPACE: u64 = 0x7265;

/// One CSV row. Fields that a failed replica could not produce are empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub seed: u64,
    pub n: usize,
    pub k: usize,
    pub alpha: f64,
    pub gamma: Option<u64>,
    pub model: Model,
    pub protocol: Protocol,
    pub t_mix: Option<u64>,
    pub rounds: Option<u64>,
    pub consensus_round: Option<u64>,
    pub all_correct: bool,
    pub memory_bits: Option<u64>,
}

impl Row {
    pub fn from_record(r: &RunRecord) -> Self {
        Row {
            seed: r.seed,
            n: r.n,
            k: r.k,
            alpha: r.alpha,
            gamma: Some(r.gamma),
            model: r.model,
            protocol: r.protocol,
            t_mix: r.t_mix,
            rounds: Some(r.rounds),
            consensus_round: r.consensus_round,
            all_correct: r.all_correct,
            memory_bits: Some(r.memory_bits),
        }
    }
}

/// Outcome of one replica.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaResult {
    pub point: usize,
    pub replica: u64,
    pub row: Row,
    pub record: Option<RunRecord>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub point: usize,
    pub n: usize,
    pub model: Model,
    pub protocol: Protocol,
    pub counts: Vec<usize>,
    pub gamma: Option<u64>,
    pub t_mix: Option<u64>,
    pub replicas: u64,
    pub successes: u64,
    pub success_fraction: f64,
    /// Median consensus round over replicas that reached consensus.
    pub median_consensus_round: Option<f64>,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub replicas: Vec<ReplicaResult>,
    pub summary: Vec<PointSummary>,
}

/// Everything shared by the replicas of one sweep point.
#[derive(Debug, Clone)]
pub struct PointPlan {
    pub point: usize,
    pub n: usize,
    pub counts: Vec<usize>,
    pub pattern: PatternSpec,
    pub gamma: u64,
    pub t_mix: Option<u64>,
    pub g: Option<u64>,
    pub horizon: Option<u64>,
}

/// Seed of replica `replica` at sweep point `point`.
pub fn replica_seed(master: u64, point: usize, replica: u64) -> u64 {
    derive_seed(master, &[REPLICA_SPACE, point as u64, replica])
}

pub fn point_graph(spec: &ExperimentSpec, point: usize) -> Result<Graph> {
    if let Some(path) = &spec.graph_file {
        return Ok(edgelist::read_graph(path)?);
    }
    let n = spec.n[point];
    let seed = derive_seed(spec.seed, &[GRAPH_STREAM, point as u64]);
    build_graph(spec.graph, n, spec.d, seed).with_context(|| format!("building {} graph on {n} nodes", spec.graph))
}

pub fn point_pattern(spec: &ExperimentSpec, graph: Graph, seed: u64) -> Result<PatternSpec> {
    Ok(match spec.model {
        Model::BalancingCircuit => {
            let matchings = if spec.matchings.is_empty() {
                circuit_matchings(&graph)?
            } else {
                spec.matchings.iter().map(|p| edgelist::read_matching(p, graph.n())).collect::<Result<_, _>>()?
            };
            PatternSpec::balancing_circuit(graph, matchings, seed)?
        }
        model => PatternSpec::for_model(model, graph, spec.matching_probability, seed)?,
    })
}

/// `⌈64·n·log₂ n⌉`.
pub fn default_balance_horizon(n: usize) -> u64 {
    (64.0 * n as f64 * (n as f64).log2()).ceil() as u64
}

pub fn plan_point(spec: &ExperimentSpec, point: usize) -> Result<PointPlan> {
    let graph = point_graph(spec, point)?;
    let n = graph.n();
    let counts = spec.counts_at(n)?;
    let alpha = initial_bias(&counts);
    let pattern = point_pattern(spec, graph, derive_seed(spec.seed, &[PATTERN_STREAM, point as u64]))?;
    match spec.protocol {
        Protocol::Shuffle => {
            let t_mix = match spec.t_mix {
                Some(t) => t,
                None => {
                    let eps = spec.epsilon.unwrap_or_else(|| default_epsilon(n));
                    estimate_mixing_time(&pattern, eps, spec.mixing_horizon, spec.mixing_trials)?.t_mix
                }
            };
            let delta = max_active_degree(&pattern);
            let gamma = match spec.gamma {
                Some(g) => g,
                None => required_gamma(n, alpha, spec.trade_off, spec.c, delta)?,
            };
            Ok(PointPlan { point, n, counts, pattern, gamma, t_mix: Some(t_mix), g: None, horizon: None })
        }
        Protocol::Balance => {
            let g = spec.g.unwrap_or_else(|| default_target_discrepancy(&pattern));
            let gamma = match spec.gamma {
                Some(gm) => gm,
                None => required_gamma_balance(g, alpha, n)?,
            };
            let horizon = spec.horizon.unwrap_or_else(|| default_balance_horizon(n));
            Ok(PointPlan { point, n, counts, pattern, gamma, t_mix: None, g: Some(g), horizon: Some(horizon) })
        }
    }
}

/// Runs one replica of a planned point. The opinion assignment is a fresh
/// uniform shuffle of the counts, and randomized patterns get a fresh seed.
pub fn run_replica(spec: &ExperimentSpec, plan: &PointPlan, replica: u64) -> Result<RunRecord> {
    let seed = replica_seed(spec.seed, plan.point, replica);
    let mut assignment = block_assignment(&plan.counts);
    assignment.shuffle(&mut seeded(derive_seed(seed, &[ASSIGN_STREAM])));
    let pattern = plan.pattern.with_seed(derive_seed(seed, &[PATTERN_STREAM]));
    let run_seed = derive_seed(seed, &[PROTOCOL_STREAM]);
    let mut record = match spec.protocol {
        Protocol::Shuffle => {
            let t_mix = plan.t_mix.expect("shuffle plans carry t_mix");
            let cfg = ShuffleConfig::new(plan.gamma, spec.trade_off, t_mix, spec.c, spec.k, assignment)?;
            run_shuffle(&cfg, &pattern, run_seed)?
        }
        Protocol::Balance => {
            let cfg = BalanceConfig::new(plan.gamma, plan.g.expect("balance plans carry g"), spec.k, assignment, plan.horizon.expect("balance plans carry a horizon"))?;
            run_balance(&cfg, &pattern, run_seed)?
        }
    };
    record.seed = seed;
    Ok(record)
}

fn failed_row(spec: &ExperimentSpec, point: usize, replica: u64, n: usize, plan: Option<&PointPlan>) -> Row {
    let counts = plan.map(|p| p.counts.clone()).or_else(|| spec.counts_at(n).ok());
    Row {
        seed: replica_seed(spec.seed, point, replica),
        n,
        k: spec.k,
        alpha: counts.as_deref().map_or(f64::NAN, initial_bias),
        gamma: plan.map(|p| p.gamma),
        model: spec.model,
        protocol: spec.protocol,
        t_mix: plan.and_then(|p| p.t_mix),
        rounds: None,
        consensus_round: None,
        all_correct: false,
        memory_bits: None,
    }
}

/// Executes every `(point, replica)` pair. Replica failures become rows
/// with empty result fields and never abort the sweep.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<SweepResult> {
    spec.validate()?;
    let plans: Vec<Result<PointPlan, String>> =
        (0..spec.n.len()).into_par_iter().map(|p| plan_point(spec, p).map_err(|e| format!("{e:#}"))).collect();
    let jobs: Vec<(usize, u64)> = (0..spec.n.len()).flat_map(|p| (0..spec.replicas).map(move |r| (p, r))).collect();
    let replicas: Vec<ReplicaResult> = jobs
        .into_par_iter()
        .map(|(point, replica)| match &plans[point] {
            Ok(plan) => match run_replica(spec, plan, replica) {
                Ok(record) => ReplicaResult { point, replica, row: Row::from_record(&record), record: Some(record), error: None },
                Err(e) => ReplicaResult {
                    point,
                    replica,
                    row: failed_row(spec, point, replica, plan.n, Some(plan)),
                    record: None,
                    error: Some(format!("{e:#}")),
                },
            },
            Err(e) => ReplicaResult {
                point,
                replica,
                row: failed_row(spec, point, replica, spec.n[point], None),
                record: None,
                error: Some(e.clone()),
            },
        })
        .collect();
    let summary = (0..spec.n.len()).map(|p| summarize(spec, p, plans[p].as_ref().ok(), &replicas)).collect();
    Ok(SweepResult { replicas, summary })
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let m = values.len() / 2;
    Some(if values.len() % 2 == 1 { values[m] } else { (values[m - 1] + values[m]) / 2.0 })
}

fn summarize(spec: &ExperimentSpec, point: usize, plan: Option<&PointPlan>, all: &[ReplicaResult]) -> PointSummary {
    let mine: Vec<&ReplicaResult> = all.iter().filter(|r| r.point == point).collect();
    let successes = mine.iter().filter(|r| r.row.all_correct).count() as u64;
    let mut rounds: Vec<f64> = mine.iter().filter_map(|r| r.row.consensus_round).map(|c| c as f64).collect();
    let mut failures: Vec<String> = mine.iter().filter_map(|r| r.error.clone()).collect();
    failures.dedup();
    let n = plan.map_or(spec.n[point], |p| p.n);
    PointSummary {
        point,
        n,
        model: spec.model,
        protocol: spec.protocol,
        counts: plan.map(|p| p.counts.clone()).unwrap_or_default(),
        gamma: plan.map(|p| p.gamma),
        t_mix: plan.and_then(|p| p.t_mix),
        replicas: mine.len() as u64,
        successes,
        success_fraction: successes as f64 / mine.len().max(1) as f64,
        median_consensus_round: median(&mut rounds),
        failures,
    }
}

/// Writes the header and one row per replica, in sweep order.
pub fn write_csv<W: Write>(result: &SweepResult, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in &result.replicas {
        out.serialize(&r.row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_summary<W: Write>(result: &SweepResult, w: W) -> Result<()> {
    serde_json::to_writer_pretty(w, &result.summary)?;
    Ok(())
}

pub fn read_rows<R: std::io::Read>(r: R) -> Result<Vec<Row>> {
    let mut rdr = csv::Reader::from_reader(r);
    rdr.deserialize().map(|row| row.context("reading run row")).collect()
}
