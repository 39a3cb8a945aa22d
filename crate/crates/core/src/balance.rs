//! The k-dimensional load-balancing protocol with vertex-based rounding.
//!
//! Each node starts with `γ` tokens in the dimension of its opinion. Every
//! round, per dimension, node `u` sends `⌊ℓ·P[u, v]⌋` tokens to every active
//! neighbor and keeps `⌊ℓ·P[u, u]⌋`. The excess `x ≤ d_t(u)` left over by the
//! floors is handed out one token per neighbor at most: neighbor `v` gets an
//! extra token with probability equal to the fractional part of
//! `ℓ·P[u, v]`, and what is not handed out stays at `u`. Each node guesses
//! the dimension with the largest load.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::pattern::{max_active_degree, Model, PatternSpec};
use crate::record::{ceil_tolerant, initial_bias, opinion_counts, plurality_opinion, ConsensusTracker, Outcome, Protocol, RunRecord};
use crate::rng::{self, SimRng};
use crate::smoothing::TransitionMatrix;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalanceNodeState {
    pub opinion: usize,
    pub load: Vec<u64>,
    pub plurality_guess: usize,
}

impl BalanceNodeState {
    pub fn new(opinion: usize, k: usize, gamma: u64) -> Self {
        let mut load = vec![0; k];
        load[opinion] = gamma;
        BalanceNodeState { opinion, load, plurality_guess: opinion }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceConfig {
    pub gamma: u64,
    /// Target discrepancy `g`.
    pub g: u64,
    pub k: usize,
    pub assignment: Vec<usize>,
    pub horizon: u64,
}

impl BalanceConfig {
    /// Checks `γ ∈ [3g/α, n⁵]` and that a strict plurality exists.
    pub fn new(gamma: u64, g: u64, k: usize, assignment: Vec<usize>, horizon: u64) -> Result<Self> {
        if g == 0 || k == 0 {
            return Err(invalid("g and k must be positive"));
        }
        let counts = opinion_counts(&assignment, k)?;
        plurality_opinion(&counts)?;
        let n = assignment.len();
        let min = required_gamma_balance(g, initial_bias(&counts), n)?;
        if gamma < min {
            return Err(invalid(format!("γ = {gamma} is below ⌈3g/α⌉ = {min}")));
        }
        if (gamma as f64) > libm::pow(n as f64, 5.0) {
            return Err(invalid(format!("γ = {gamma} exceeds n⁵")));
        }
        Ok(BalanceConfig { gamma, g, k, assignment, horizon })
    }

    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    pub fn counts(&self) -> Vec<usize> {
        opinion_counts(&self.assignment, self.k).expect("validated at construction")
    }
}

/// `⌈3g/α⌉`, rejected when it exceeds `n⁵`.
pub fn required_gamma_balance(g: u64, alpha: f64, n: usize) -> Result<u64> {
    if g == 0 || !(alpha > 0.0 && alpha <= 1.0) {
        return Err(invalid(format!("need g >= 1 and α in (0, 1], got g = {g}, α = {alpha}")));
    }
    let gamma = ceil_tolerant(3.0 * g as f64 / alpha);
    if gamma > libm::pow(n as f64, 5.0) {
        return Err(invalid(format!("⌈3g/α⌉ = {gamma} exceeds n⁵ for n = {n}")));
    }
    Ok(gamma as u64)
}

/// `k·⌈log₂(γ + 1)⌉`.
pub fn balance_memory_bits(k: usize, gamma: u64) -> u64 {
    k as u64 * u64::from(u64::BITS - gamma.leading_zeros())
}

/// Target discrepancy used when none is given: 2 for matching-based models,
/// `⌈√(d·log n)⌉` for diffusion with `d` the maximum degree.
///
/// With `Δ = 1` two equal odd loads on an active edge split into `m ± 1` half
/// of the time, so discrepancy 1 is not absorbing when the average load is
/// odd and is only hit by chance; the band `{m-1, m, m+1}` around an odd `m`
/// is absorbing.
pub fn default_target_discrepancy(spec: &PatternSpec) -> u64 {
    match spec.model() {
        Model::Diffusion => {
            let d = spec.graph().max_degree() as f64;
            (libm::ceil(libm::sqrt(d * libm::log2(spec.n() as f64))) as u64).max(1)
        }
        _ => 2,
    }
}

/// Argmax of the load vector, ties to the smaller label.
pub fn plurality_guess(load: &[u64]) -> usize {
    let mut best = 0;
    for (i, &l) in load.iter().enumerate() {
        if l > load[best] {
            best = i;
        }
    }
    best
}

/// Floor sends of `load` along one row of `P`, in row order (the self entry
/// included), and the excess left over.
pub fn split_load(load: u64, row: &[(usize, u64)], denominator: u64) -> (Vec<u64>, u64) {
    let sends: Vec<u64> = row.iter().map(|&(_, w)| load * w / denominator).collect();
    let excess = load - sends.iter().sum::<u64>();
    (sends, excess)
}

/// One round of vertex-based balancing in every dimension.
pub fn balance_step(states: &mut [BalanceNodeState], p: &TransitionMatrix, rng: &mut SimRng) -> Result<()> {
    let n = states.len();
    if p.n() != n {
        return Err(invalid("transition matrix and state sizes differ"));
    }
    let k = states.first().map_or(0, |s| s.load.len());
    let denom = p.denominator();
    let mut next = vec![vec![0u64; k]; n];
    let mut neighbors = Vec::new();
    for (u, state) in states.iter().enumerate() {
        let row = p.row(u);
        neighbors.clear();
        neighbors.extend(row.iter().filter(|&&(v, _)| v != u).map(|&(v, _)| v));
        let d = neighbors.len() as u64;
        for (dim, &load) in state.load.iter().enumerate() {
            if load == 0 {
                continue;
            }
            let (sends, excess) = split_load(load, row, denom);
            for (&(v, _), s) in row.iter().zip(&sends) {
                next[v][dim] += s;
            }
            // Off-diagonal weights are all 1/(2Δ), so every neighbor has the
            // same fractional part r/(2Δ); the expected number of extra
            // tokens is d·r/(2Δ) ≤ excess.
            let r = load % denom;
            let expected = d * r;
            let mut extra = expected / denom;
            if rng.random_range(0..denom) < expected % denom {
                extra += 1;
            }
            debug_assert!(extra <= excess);
            if extra > 0 {
                for i in index::sample(rng, neighbors.len(), extra as usize) {
                    next[neighbors[i]][dim] += 1;
                }
            }
            next[u][dim] += excess - extra;
        }
    }
    for (state, load) in states.iter_mut().zip(next) {
        state.load = load;
        state.plurality_guess = plurality_guess(&state.load);
    }
    Ok(())
}

/// `max - min` of each dimension across nodes.
pub fn discrepancies(states: &[BalanceNodeState]) -> Vec<u64> {
    let k = states.first().map_or(0, |s| s.load.len());
    (0..k)
        .map(|i| {
            let (lo, hi) = states.iter().fold((u64::MAX, 0), |(lo, hi), s| (lo.min(s.load[i]), hi.max(s.load[i])));
            hi - lo
        })
        .collect()
}

/// Round-by-round execution of the protocol.
pub struct BalanceSim<'a> {
    spec: &'a PatternSpec,
    delta: usize,
    pub states: Vec<BalanceNodeState>,
    pub round: u64,
    rng: SimRng,
}

impl<'a> BalanceSim<'a> {
    pub fn new(cfg: &BalanceConfig, spec: &'a PatternSpec, seed: u64) -> Result<Self> {
        if cfg.n() != spec.n() {
            return Err(invalid("configuration and pattern have different node counts"));
        }
        let states = cfg.assignment.iter().map(|&o| BalanceNodeState::new(o, cfg.k, cfg.gamma)).collect();
        Ok(BalanceSim { spec, delta: max_active_degree(spec), states, round: 0, rng: rng::seeded(seed) })
    }

    pub fn step(&mut self) -> Result<()> {
        self.round += 1;
        let p = TransitionMatrix::from_active(&self.spec.generate(self.round), self.spec.n(), self.delta)?;
        balance_step(&mut self.states, &p, &mut self.rng)
    }

    pub fn guesses(&self) -> Vec<usize> {
        self.states.iter().map(|s| s.plurality_guess).collect()
    }
}

/// Balances until every dimension has discrepancy `<= g` or the horizon is
/// reached. Missing the target is recorded in the outcome, not an error.
pub fn run_balance(cfg: &BalanceConfig, spec: &PatternSpec, seed: u64) -> Result<RunRecord> {
    let plurality = plurality_opinion(&cfg.counts())?;
    let mut sim = BalanceSim::new(cfg, spec, seed)?;
    let mut tracker = ConsensusTracker::default();
    let correct = |sim: &BalanceSim| sim.states.iter().all(|s| s.plurality_guess == plurality);
    let reached = |sim: &BalanceSim| discrepancies(&sim.states).iter().all(|&d| d <= cfg.g);
    tracker.observe(0, correct(&sim));
    while !reached(&sim) && sim.round < cfg.horizon {
        sim.step()?;
        tracker.observe(sim.round, correct(&sim));
    }
    let guesses = sim.guesses();
    let all_correct = guesses.iter().all(|&g| g == plurality);
    let done = reached(&sim);
    Ok(RunRecord {
        seed,
        n: cfg.n(),
        k: cfg.k,
        alpha: initial_bias(&cfg.counts()),
        gamma: cfg.gamma,
        model: spec.model(),
        protocol: Protocol::Balance,
        t_mix: None,
        rounds: sim.round,
        consensus_round: tracker.consensus_round(),
        all_correct,
        memory_bits: balance_memory_bits(cfg.k, cfg.gamma),
        plurality,
        guesses,
        outcome: Outcome::Balance {
            reached: done,
            final_discrepancy: discrepancies(&sim.states),
            implication_held: done.then_some(all_correct),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, GraphKind};
    use crate::pattern::ActiveEdgeSet;
    use crate::record::block_assignment;

    #[test]
    fn gamma_examples() {
        assert_eq!(required_gamma_balance(1, 1.0, 4).unwrap(), 3);
        assert_eq!(required_gamma_balance(2, 0.125, 16).unwrap(), 48);
        assert_eq!(required_gamma_balance(1, 1.0 / 16.0, 16).unwrap(), 48);
        assert_eq!(required_gamma_balance(1, 1.0 / 3.0, 3).unwrap(), 9);
        assert!(required_gamma_balance(1000, 0.5, 2).is_err());
    }

    #[test]
    fn memory_examples() {
        assert_eq!(balance_memory_bits(2, 3), 4);
        assert_eq!(balance_memory_bits(4, 48), 24);
        assert_eq!(balance_memory_bits(1, 1), 1);
        assert_eq!(balance_memory_bits(1, 255), 8);
        assert_eq!(balance_memory_bits(1, 256), 9);
    }

    #[test]
    fn guess_examples() {
        assert_eq!(plurality_guess(&[5, 3, 3]), 0);
        assert_eq!(plurality_guess(&[4, 4]), 0);
        assert_eq!(plurality_guess(&[0, 0, 0, 7]), 3);
    }

    #[test]
    fn triangle_split_of_six() {
        let a = ActiveEdgeSet::new(1, vec![(0, 1), (0, 2), (1, 2)]);
        let p = TransitionMatrix::from_active(&a, 3, 2).unwrap();
        let (sends, excess) = split_load(6, p.row(0), p.denominator());
        assert_eq!(sends, vec![3, 1, 1]);
        assert_eq!(excess, 1);
        let mut r = rng::seeded(0);
        for _ in 0..200 {
            let mut s = vec![BalanceNodeState::new(0, 1, 6), BalanceNodeState::new(0, 1, 0), BalanceNodeState::new(0, 1, 0)];
            balance_step(&mut s, &p, &mut r).unwrap();
            let loads: Vec<u64> = s.iter().map(|x| x.load[0]).collect();
            assert_eq!(loads.iter().sum::<u64>(), 6);
            assert_eq!(loads[0], 3);
            assert!(loads == vec![3, 2, 1] || loads == vec![3, 1, 2]);
        }
    }

    #[test]
    fn divisible_loads_are_deterministic() {
        let a = ActiveEdgeSet::new(1, vec![(0, 1), (0, 2), (1, 2)]);
        let p = TransitionMatrix::from_active(&a, 3, 2).unwrap();
        let (_, excess) = split_load(8, p.row(0), p.denominator());
        assert_eq!(excess, 0);
        let (sends, excess) = split_load(0, p.row(0), p.denominator());
        assert_eq!((sends, excess), (vec![0, 0, 0], 0));
    }

    #[test]
    fn unanimous_is_correct_at_round_zero() {
        let spec = PatternSpec::diffusion(build_graph(GraphKind::Complete, 4, 0, 0).unwrap(), 0);
        let cfg = BalanceConfig::new(3, 1, 1, vec![0; 4], 100).unwrap();
        let rec = run_balance(&cfg, &spec, 0).unwrap();
        assert_eq!(rec.rounds, 0);
        assert_eq!(rec.consensus_round, Some(0));
        assert!(rec.all_correct);
    }

    #[test]
    fn k3_example_reaches_target_and_is_correct() {
        let spec = PatternSpec::sequential(build_graph(GraphKind::Complete, 3, 0, 0).unwrap(), 5).unwrap();
        let cfg = BalanceConfig::new(9, 1, 2, block_assignment(&[2, 1]), 1000).unwrap();
        let rec = run_balance(&cfg, &spec, 5).unwrap();
        match rec.outcome {
            Outcome::Balance { reached, implication_held, .. } => {
                assert!(reached);
                assert_eq!(implication_held, Some(true));
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn config_range_is_enforced() {
        assert!(BalanceConfig::new(8, 1, 2, block_assignment(&[2, 1]), 10).is_err());
        assert!(BalanceConfig::new(9, 1, 2, block_assignment(&[2, 1]), 10).is_ok());
        assert!(BalanceConfig::new(9, 1, 2, block_assignment(&[1, 1]), 10).is_err());
    }

    #[test]
    fn default_targets() {
        let k16 = build_graph(GraphKind::Complete, 16, 0, 0).unwrap();
        assert_eq!(default_target_discrepancy(&PatternSpec::diffusion(k16.clone(), 0)), 8);
        assert_eq!(default_target_discrepancy(&PatternSpec::sequential(k16, 0).unwrap()), 2);
    }
}
