//! The token-shuffling protocol with max-counter broadcast.
//!
//! Every node starts with `γ` tokens labeled with its opinion. Each round it
//! splits a uniformly random permutation of its tokens into one slot per
//! active neighbor (plus itself) with sizes `P_t[u, v]·γ`, and floods the
//! pair `(dom, est)` with the largest estimate. Every `t_mix` rounds it adds
//! the number of own-label tokens it holds to its counter, adopts the
//! flooded opinion as its guess and restarts the flood with its own counter.
//!
//! Tokens are kept as per-label counts; drawing a slot from the counts
//! without replacement is the same law as slicing a random permutation.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::pattern::{max_active_degree, ActiveEdgeSet, PatternSpec};
use crate::record::{ceil_tolerant, initial_bias, opinion_counts, plurality_opinion, ConsensusTracker, Outcome, Protocol, RunRecord};
use crate::rng::{self, SimRng};
use crate::sampling::draw_without_replacement;
use crate::smoothing::TransitionMatrix;

/// Default analysis constant.
pub const DEFAULT_C: f64 = 12.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShuffleNodeState {
    pub opinion: usize,
    /// Tokens held, as a count per label.
    pub tokens: Vec<u64>,
    pub counter: u64,
    pub dom: usize,
    pub est: u64,
    pub plurality_guess: usize,
}

impl ShuffleNodeState {
    pub fn new(opinion: usize, k: usize, gamma: u64) -> Self {
        let mut tokens = vec![0; k];
        tokens[opinion] = gamma;
        ShuffleNodeState { opinion, tokens, counter: 0, dom: opinion, est: 0, plurality_guess: opinion }
    }

    pub fn token_count(&self) -> u64 {
        self.tokens.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShuffleConfig {
    pub gamma: u64,
    /// Trade-off parameter `T`.
    pub trade_off: u64,
    pub t_mix: u64,
    pub c: f64,
    pub k: usize,
    pub assignment: Vec<usize>,
}

impl ShuffleConfig {
    pub fn new(gamma: u64, trade_off: u64, t_mix: u64, c: f64, k: usize, assignment: Vec<usize>) -> Result<Self> {
        if gamma == 0 || trade_off == 0 || t_mix == 0 || k == 0 {
            return Err(invalid("γ, T, t_mix and k must be positive"));
        }
        if !(c > 0.0) {
            return Err(invalid("c must be positive"));
        }
        plurality_opinion(&opinion_counts(&assignment, k)?)?;
        Ok(ShuffleConfig { gamma, trade_off, t_mix, c, k, assignment })
    }

    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    pub fn counts(&self) -> Vec<usize> {
        opinion_counts(&self.assignment, self.k).expect("validated at construction")
    }

    pub fn alpha(&self) -> f64 {
        initial_bias(&self.counts())
    }

    /// `⌈c·T⌉`, the update whose broadcast decides the final guesses.
    pub fn decision_update(&self) -> u64 {
        ceil_tolerant(self.c * self.trade_off as f64) as u64
    }

    /// `c·T·t_mix + t_mix`, with `c·T` rounded up.
    pub fn total_rounds(&self) -> u64 {
        (self.decision_update() + 1) * self.t_mix
    }
}

/// `⌈c·log n / (α²·T)⌉` rounded up to a multiple of `2Δ` (at least `2Δ`).
pub fn required_gamma(n: usize, alpha: f64, trade_off: u64, c: f64, delta: usize) -> Result<u64> {
    if n < 2 || !(alpha > 0.0 && alpha <= 1.0) || trade_off == 0 || !(c > 0.0) || delta == 0 {
        return Err(invalid(format!(
            "required_gamma needs n >= 2, α in (0, 1], T >= 1, c > 0, Δ >= 1 (got n={n}, α={alpha}, T={trade_off}, c={c}, Δ={delta})"
        )));
    }
    let raw = ceil_tolerant(c * libm::log2(n as f64) / (alpha * alpha * trade_off as f64)) as u64;
    let slot = 2 * delta as u64;
    Ok(raw.div_ceil(slot).max(1) * slot)
}

/// `(12·log n/(α²T) + 4)·log k + 4·log(12·log n/α²) + log(T·t_mix)`, rounded up.
pub fn shuffle_memory_bits(n: usize, k: usize, alpha: f64, trade_off: u64, t_mix: u64) -> u64 {
    let log_n = libm::log2(n as f64);
    let a2 = alpha * alpha;
    let bits = (12.0 * log_n / (a2 * trade_off as f64) + 4.0) * libm::log2(k as f64)
        + 4.0 * libm::log2(12.0 * log_n / a2)
        + libm::log2((trade_off * t_mix) as f64);
    ceil_tolerant(bits).max(0.0) as u64
}

/// One shuffle part: every node deals its tokens into slots of size
/// `P[u, v]·γ` and all slots are delivered at once.
pub fn shuffle_step(states: &mut [ShuffleNodeState], p: &TransitionMatrix, rng: &mut SimRng) -> Result<()> {
    let n = states.len();
    if p.n() != n {
        return Err(invalid("transition matrix and state sizes differ"));
    }
    let k = states.first().map_or(0, |s| s.tokens.len());
    let denom = p.denominator();
    let mut incoming = vec![vec![0u64; k]; n];
    for (u, state) in states.iter().enumerate() {
        let gamma = state.token_count();
        let mut remaining = state.tokens.clone();
        let mut dealt = 0;
        for &(v, w) in p.row(u) {
            if (gamma * w) % denom != 0 {
                return Err(Error::NonIntegralSlot { node: u, neighbor: v, gamma, numerator: w, denominator: denom });
            }
            if v == u {
                continue;
            }
            let size = gamma * w / denom;
            dealt += size;
            draw_without_replacement(&mut remaining, size, &mut incoming[v], rng);
        }
        // The self slot is whatever was not dealt.
        debug_assert_eq!(gamma - dealt, gamma * p.numerator(u, u) / denom);
        for (acc, r) in incoming[u].iter_mut().zip(&remaining) {
            *acc += r;
        }
    }
    for (state, tokens) in states.iter_mut().zip(incoming) {
        state.tokens = tokens;
    }
    Ok(())
}

/// One broadcast part: every node adopts the `(dom, est)` pair of the
/// active neighbor with the largest `est` if it is strictly larger than its
/// own; equal neighbors are resolved by smaller node id. Ties never depend
/// on labels. All nodes read the pre-round values.
pub fn broadcast_step(states: &mut [ShuffleNodeState], active: &ActiveEdgeSet) {
    let n = states.len();
    let before: Vec<(usize, u64)> = states.iter().map(|s| (s.dom, s.est)).collect();
    let mut best: Vec<usize> = (0..n).collect();
    let offer = |u: usize, v: usize, best: &mut [usize]| {
        let (ev, ecur) = (before[v].1, before[best[u]].1);
        if ev > ecur || (ev == ecur && best[u] != u && v < best[u]) {
            best[u] = v;
        }
    };
    for &(u, v) in &active.active {
        offer(u, v, &mut best);
        offer(v, u, &mut best);
    }
    for (state, w) in states.iter_mut().zip(best) {
        (state.dom, state.est) = before[w];
    }
}

/// One update part.
pub fn update_step(states: &mut [ShuffleNodeState]) {
    for s in states {
        s.counter += s.tokens[s.opinion];
        s.plurality_guess = s.dom;
        s.dom = s.opinion;
        s.est = s.counter;
    }
}

/// Round-by-round execution of the protocol.
pub struct ShuffleSim<'a> {
    spec: &'a PatternSpec,
    cfg: &'a ShuffleConfig,
    delta: usize,
    pub states: Vec<ShuffleNodeState>,
    pub round: u64,
    pub updates: u64,
    rng: SimRng,
}

impl<'a> ShuffleSim<'a> {
    pub fn new(cfg: &'a ShuffleConfig, spec: &'a PatternSpec, seed: u64) -> Result<Self> {
        if cfg.n() != spec.n() {
            return Err(invalid("configuration and pattern have different node counts"));
        }
        let delta = max_active_degree(spec);
        if cfg.gamma % (2 * delta as u64) != 0 {
            return Err(invalid(format!("γ = {} is not a multiple of 2Δ = {}", cfg.gamma, 2 * delta)));
        }
        let states = cfg.assignment.iter().map(|&o| ShuffleNodeState::new(o, cfg.k, cfg.gamma)).collect();
        Ok(ShuffleSim { spec, cfg, delta, states, round: 0, updates: 0, rng: rng::seeded(seed) })
    }

    /// Executes the next round; returns whether it ended with an update.
    pub fn step(&mut self) -> Result<bool> {
        self.round += 1;
        let active = self.spec.generate(self.round);
        let p = TransitionMatrix::from_active(&active, self.spec.n(), self.delta)?;
        shuffle_step(&mut self.states, &p, &mut self.rng)?;
        broadcast_step(&mut self.states, &active);
        if self.round % self.cfg.t_mix == 0 {
            update_step(&mut self.states);
            self.updates += 1;
            return Ok(true);
        }
        Ok(false)
    }

    pub fn guesses(&self) -> Vec<usize> {
        self.states.iter().map(|s| s.plurality_guess).collect()
    }
}

/// Runs `c·T·t_mix + t_mix` rounds and records the final guesses.
pub fn run_shuffle(cfg: &ShuffleConfig, spec: &PatternSpec, seed: u64) -> Result<RunRecord> {
    let plurality = plurality_opinion(&cfg.counts())?;
    let mut sim = ShuffleSim::new(cfg, spec, seed)?;
    let mut tracker = ConsensusTracker::default();
    let correct = |sim: &ShuffleSim| sim.states.iter().all(|s| s.plurality_guess == plurality);
    tracker.observe(0, correct(&sim));
    let decision = cfg.decision_update();
    let mut decision_counters = Vec::new();
    while sim.round < cfg.total_rounds() {
        if sim.step()? {
            tracker.observe(sim.round, correct(&sim));
            if sim.updates == decision {
                decision_counters = sim.states.iter().map(|s| s.counter).collect();
            }
        }
    }
    let guesses = sim.guesses();
    let alpha = cfg.alpha();
    Ok(RunRecord {
        seed,
        n: cfg.n(),
        k: cfg.k,
        alpha,
        gamma: cfg.gamma,
        model: spec.model(),
        protocol: Protocol::Shuffle,
        t_mix: Some(cfg.t_mix),
        rounds: sim.round,
        consensus_round: tracker.consensus_round(),
        all_correct: guesses.iter().all(|&g| g == plurality),
        memory_bits: shuffle_memory_bits(cfg.n(), cfg.k, alpha, cfg.trade_off, cfg.t_mix),
        plurality,
        guesses,
        outcome: Outcome::Shuffle {
            counters: sim.states.iter().map(|s| s.counter).collect(),
            decision_counters,
            updates: sim.updates,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, GraphKind};
    use crate::record::block_assignment;

    fn state(opinion: usize, tokens: Vec<u64>, counter: u64) -> ShuffleNodeState {
        ShuffleNodeState { opinion, tokens, counter, dom: opinion, est: counter, plurality_guess: opinion }
    }

    #[test]
    fn gamma_examples() {
        assert_eq!(required_gamma(16, 1.0, 1, 12.0, 1).unwrap(), 48);
        assert_eq!(required_gamma(16, 0.5, 2, 12.0, 3).unwrap(), 96);
        assert_eq!(required_gamma(16, 1.0, 1_000_000, 12.0, 3).unwrap(), 6);
        assert_eq!(required_gamma(16, 1.0 / 16.0, 1, 12.0, 15).unwrap(), 12300);
        assert!(required_gamma(16, 0.0, 1, 12.0, 1).is_err());
    }

    #[test]
    fn memory_examples() {
        assert_eq!(shuffle_memory_bits(16, 2, 1.0, 12, 5), 37);
        // k = 1 drops the token term.
        let expected = (4.0 * libm::log2(48.0) + libm::log2(60.0f64)).ceil() as u64;
        assert_eq!(shuffle_memory_bits(16, 1, 1.0, 12, 5), expected);
    }

    #[test]
    fn single_edge_slots_of_one() {
        let a = ActiveEdgeSet::new(1, vec![(0, 1)]);
        let p = TransitionMatrix::from_active(&a, 2, 1).unwrap();
        let mut r = rng::seeded(3);
        let mut swapped = 0;
        for _ in 0..2000 {
            let mut s = vec![state(0, vec![1, 1], 0), state(1, vec![0, 2], 0)];
            shuffle_step(&mut s, &p, &mut r).unwrap();
            assert_eq!(s[0].token_count(), 2);
            assert_eq!(s[1].token_count(), 2);
            assert_eq!(s[0].tokens[0] + s[1].tokens[0], 1);
            swapped += s[1].tokens[0];
        }
        // Node 0 sends its label-0 token with probability 1/2.
        assert!((swapped as f64 / 2000.0 - 0.5).abs() < 0.05);
    }

    #[test]
    fn empty_active_set_keeps_tokens() {
        let p = TransitionMatrix::from_active(&ActiveEdgeSet::empty(1), 3, 2).unwrap();
        let mut s = vec![state(0, vec![3, 1], 0), state(1, vec![0, 4], 0), state(0, vec![2, 2], 0)];
        let before = s.clone();
        shuffle_step(&mut s, &p, &mut rng::seeded(0)).unwrap();
        assert_eq!(s, before);
    }

    #[test]
    fn non_integral_slot_is_rejected() {
        let a = ActiveEdgeSet::new(1, vec![(0, 1), (0, 2), (1, 2)]);
        let p = TransitionMatrix::from_active(&a, 3, 2).unwrap();
        let mut s = vec![state(0, vec![6], 0), state(0, vec![6], 0), state(0, vec![6], 0)];
        assert!(matches!(shuffle_step(&mut s, &p, &mut rng::seeded(0)), Err(Error::NonIntegralSlot { .. })));
    }

    #[test]
    fn broadcast_isolated_and_edge() {
        let mut s = vec![state(0, vec![1, 0], 5), state(1, vec![0, 1], 3), state(1, vec![0, 1], 9)];
        broadcast_step(&mut s, &ActiveEdgeSet::new(1, vec![(0, 1)]));
        assert_eq!((s[0].dom, s[0].est), (0, 5));
        assert_eq!((s[1].dom, s[1].est), (0, 5));
        assert_eq!((s[2].dom, s[2].est), (1, 9));
    }

    #[test]
    fn broadcast_is_simultaneous_along_a_path() {
        // path 0 - 1 - 2, node 0 holds the maximum
        let mut s = vec![state(2, vec![1], 8), state(0, vec![1], 1), state(1, vec![1], 0)];
        let path = ActiveEdgeSet::new(1, vec![(0, 1), (1, 2)]);
        broadcast_step(&mut s, &path);
        assert_eq!((s[1].dom, s[1].est), (2, 8));
        assert_eq!((s[2].dom, s[2].est), (0, 1));
        broadcast_step(&mut s, &ActiveEdgeSet::new(2, vec![(1, 2)]));
        assert_eq!((s[2].dom, s[2].est), (2, 8));
    }

    #[test]
    fn broadcast_ties_keep_own_pair() {
        let mut s = vec![state(2, vec![1], 4), state(1, vec![1], 4), state(0, vec![1], 4)];
        let tri = ActiveEdgeSet::new(1, vec![(0, 1), (0, 2), (1, 2)]);
        broadcast_step(&mut s, &tri);
        assert_eq!(s.iter().map(|x| x.dom).collect::<Vec<_>>(), vec![2, 1, 0]);
    }

    #[test]
    fn broadcast_equal_maxima_resolve_by_node_id() {
        let mut s = vec![state(0, vec![1], 1), state(2, vec![1], 7), state(1, vec![1], 7)];
        let tri = ActiveEdgeSet::new(1, vec![(0, 1), (0, 2), (1, 2)]);
        broadcast_step(&mut s, &tri);
        assert_eq!((s[0].dom, s[0].est), (2, 7));
        assert_eq!((s[1].dom, s[2].dom), (2, 1));
    }

    #[test]
    fn update_counts_own_tokens() {
        let mut s = vec![ShuffleNodeState { opinion: 2, tokens: vec![0, 1, 2], counter: 4, dom: 0, est: 9, plurality_guess: 2 }];
        update_step(&mut s);
        assert_eq!(s[0].counter, 6);
        assert_eq!(s[0].plurality_guess, 0);
        assert_eq!((s[0].dom, s[0].est), (2, 6));
        let mut z = vec![state(1, vec![3, 0], 7)];
        update_step(&mut z);
        assert_eq!(z[0].counter, 7);
    }

    #[test]
    fn unanimous_counters_grow_by_gamma() {
        let g = build_graph(GraphKind::Cycle, 6, 0, 0).unwrap();
        let spec = PatternSpec::diffusion(g, 0);
        let cfg = ShuffleConfig::new(4, 1, 2, 3.0, 1, vec![0; 6]).unwrap();
        let rec = run_shuffle(&cfg, &spec, 1).unwrap();
        match rec.outcome {
            Outcome::Shuffle { counters, updates, .. } => {
                assert_eq!(updates, 4);
                assert!(counters.iter().all(|&c| c == 4 * updates));
            }
            _ => unreachable!(),
        }
        assert_eq!(rec.consensus_round, Some(0));
        assert!(rec.all_correct);
    }

    #[test]
    fn two_unanimous_nodes() {
        let spec = PatternSpec::diffusion(build_graph(GraphKind::Complete, 2, 0, 0).unwrap(), 0);
        let cfg = ShuffleConfig::new(2, 1, 1, 12.0, 1, vec![0, 0]).unwrap();
        let rec = run_shuffle(&cfg, &spec, 0).unwrap();
        assert_eq!(rec.guesses, vec![0, 0]);
        assert_eq!(rec.rounds, 13);
    }

    #[test]
    fn config_validation() {
        assert!(ShuffleConfig::new(4, 1, 1, 12.0, 2, vec![0, 1]).is_err());
        assert!(ShuffleConfig::new(0, 1, 1, 12.0, 1, vec![0, 0]).is_err());
        let spec = PatternSpec::diffusion(build_graph(GraphKind::Complete, 3, 0, 0).unwrap(), 0);
        let cfg = ShuffleConfig::new(6, 1, 1, 12.0, 2, block_assignment(&[2, 1])).unwrap();
        assert!(ShuffleSim::new(&cfg, &spec, 0).is_err());
    }
}
