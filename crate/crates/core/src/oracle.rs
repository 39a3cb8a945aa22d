//! Empirical checks of the shuffle analysis against the reference process
//! in which every token performs an independent random walk.
//!
//! The shuffle side runs the real [`shuffle_step`] with two labels,
//! untracked and tracked. Tokens of one label are exchangeable inside a
//! shuffle, so any event that only depends on how many tracked tokens sit
//! at each node has the same law as for individually labeled tokens. All
//! events tested here are of that form.
//!
//! Replica `r` of every test draws from stream `r` of a seed derived from the
//! test's master seed, so replicas can be split into ranges, run anywhere and
//! merged by adding counts.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::pattern::{max_active_degree, PatternSpec};
use crate::rng::{derive_seed, stream_rng, SimRng};
use crate::shuffle::{shuffle_step, ShuffleNodeState};
use crate::smoothing::{transition_at, TransitionMatrix, WindowProduct};

const SHUFFLE_TAG: u64 = 0x5348;
const WALK_TAG: u64 = 0x5741;

/// Statistical slack in binomial standard errors.
pub const SIGMAS: f64 = 3.0;

/// Largest total-variation distance accepted by the marginal test.
pub const TV_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatTestReport {
    pub statistic: String,
    pub samples: u64,
    pub observed: f64,
    pub bound: f64,
    pub slack: f64,
    pub verdict: Verdict,
}

impl StatTestReport {
    /// The verdict is `Pass` iff `observed <= bound + slack`.
    pub fn new(statistic: impl Into<String>, samples: u64, observed: f64, bound: f64, slack: f64) -> Self {
        let verdict = if observed <= bound + slack { Verdict::Pass } else { Verdict::Fail };
        StatTestReport { statistic: statistic.into(), samples, observed, bound, slack, verdict }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    /// True iff the stored verdict follows from the stored numbers.
    pub fn is_consistent(&self) -> bool {
        (self.observed <= self.bound + self.slack) == self.passed()
    }
}

/// `SIGMAS` binomial standard errors of a frequency `hits / samples`.
pub fn binomial_slack(hits: u64, samples: u64) -> f64 {
    if samples == 0 {
        return 0.0;
    }
    let p = hits as f64 / samples as f64;
    SIGMAS * libm::sqrt(p * (1.0 - p) / samples as f64)
}

/// Tokens walking independently along the rows of the `P_t` sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkEnsemble {
    pub positions: Vec<usize>,
    pub steps: u64,
}

impl WalkEnsemble {
    pub fn new(positions: Vec<usize>) -> Self {
        WalkEnsemble { positions, steps: 0 }
    }
}

/// Moves every token from `u` to `v` with probability `P[u, v]`.
pub fn walk_step<R: Rng + ?Sized>(ensemble: &mut WalkEnsemble, p: &TransitionMatrix, rng: &mut R) {
    let denom = p.denominator();
    for pos in &mut ensemble.positions {
        let mut r = rng.random_range(0..denom);
        for &(v, w) in p.row(*pos) {
            if r < w {
                *pos = v;
                break;
            }
            r -= w;
        }
    }
    ensemble.steps += 1;
}

/// The transition matrices of rounds `1..=rounds`.
pub fn pattern_matrices(spec: &PatternSpec, rounds: u64) -> Vec<TransitionMatrix> {
    (1..=rounds).map(|t| transition_at(spec, t)).collect()
}

/// Smallest token count per node that keeps every slot integral.
pub fn default_oracle_gamma(spec: &PatternSpec) -> u64 {
    2 * max_active_degree(spec) as u64
}

/// Shared inputs of one oracle experiment: a fixed `P_t` sequence, the
/// number of tokens per node and the starting node of every tracked token.
#[derive(Debug, Clone)]
pub struct TrackedSetup {
    matrices: Vec<TransitionMatrix>,
    n: usize,
    gamma: u64,
    placements: Vec<usize>,
    seed: u64,
}

impl TrackedSetup {
    pub fn new(spec: &PatternSpec, rounds: u64, gamma: u64, placements: Vec<usize>, seed: u64) -> Result<Self> {
        let n = spec.n();
        if gamma == 0 || placements.is_empty() {
            return Err(invalid("need γ >= 1 and at least one tracked token"));
        }
        let mut per_node = vec![0u64; n];
        for &v in &placements {
            if v >= n {
                return Err(invalid("tracked token placed outside the graph"));
            }
            per_node[v] += 1;
        }
        if per_node.iter().any(|&c| c > gamma) {
            return Err(invalid("more tracked tokens on a node than it holds"));
        }
        let matrices = pattern_matrices(spec, rounds);
        // Surfaces non-integral slots before any replica runs.
        if let Some(p) = matrices.first() {
            for u in 0..n {
                for &(v, w) in p.row(u) {
                    if (gamma * w) % p.denominator() != 0 {
                        return Err(Error::NonIntegralSlot { node: u, neighbor: v, gamma, numerator: w, denominator: p.denominator() });
                    }
                }
            }
        }
        Ok(TrackedSetup { matrices, n, gamma, placements, seed })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rounds(&self) -> u64 {
        self.matrices.len() as u64
    }

    pub fn placements(&self) -> &[usize] {
        &self.placements
    }

    fn initial_states(&self) -> Vec<ShuffleNodeState> {
        let mut states: Vec<ShuffleNodeState> = (0..self.n).map(|_| ShuffleNodeState::new(0, 2, self.gamma)).collect();
        for &v in &self.placements {
            states[v].tokens[0] -= 1;
            states[v].tokens[1] += 1;
        }
        states
    }

    fn shuffle_rng(&self, replica: u64) -> SimRng {
        stream_rng(derive_seed(self.seed, &[SHUFFLE_TAG]), replica)
    }

    fn walk_rng(&self, replica: u64) -> SimRng {
        stream_rng(derive_seed(self.seed, &[WALK_TAG]), replica)
    }

    /// Tracked-token counts per node after each of the first `rounds`
    /// rounds of one shuffle replica, passed to `visit(round, counts)`.
    fn run_shuffle<F: FnMut(u64, &[ShuffleNodeState])>(&self, replica: u64, rounds: u64, mut visit: F) -> Result<()> {
        let mut states = self.initial_states();
        let mut rng = self.shuffle_rng(replica);
        visit(0, &states);
        for (t, p) in self.matrices.iter().take(rounds as usize).enumerate() {
            shuffle_step(&mut states, p, &mut rng)?;
            visit(t as u64 + 1, &states);
        }
        Ok(())
    }

    /// Exact walk law of a token started at `start` after `rounds` rounds.
    pub fn walk_distribution(&self, start: usize, rounds: u64) -> Vec<f64> {
        let mut w = WindowProduct::identity(self.n, 1);
        for p in self.matrices.iter().take(rounds as usize) {
            w.push(p);
        }
        (0..self.n).map(|v| w.get(start, v)).collect()
    }
}

fn check_rounds(setup: &TrackedSetup, t: u64) -> Result<()> {
    if t > setup.rounds() {
        return Err(invalid("requested time is past the precomputed pattern"));
    }
    Ok(())
}

/// Location histograms of the first tracked token under both processes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarginalCounts {
    pub shuffle: Vec<u64>,
    pub walk: Vec<u64>,
    pub samples: u64,
}

impl MarginalCounts {
    pub fn merge(&mut self, other: &MarginalCounts) {
        for (a, b) in self.shuffle.iter_mut().zip(&other.shuffle) {
            *a += b;
        }
        for (a, b) in self.walk.iter_mut().zip(&other.walk) {
            *a += b;
        }
        self.samples += other.samples;
    }

    /// Total-variation distance of the two empirical distributions.
    pub fn total_variation(&self) -> f64 {
        if self.samples == 0 {
            return 0.0;
        }
        let diff: u64 = self.shuffle.iter().zip(&self.walk).map(|(&a, &b)| a.abs_diff(b)).sum();
        diff as f64 / (2 * self.samples) as f64
    }

    pub fn report(&self) -> StatTestReport {
        StatTestReport::new("marginal_tv", self.samples, self.total_variation(), TV_TOLERANCE, 0.0)
    }
}

/// Runs replicas `replicas` of both processes for `t` rounds, tracking a
/// single token. Only the first placement is used.
pub fn marginal_counts(setup: &TrackedSetup, t: u64, replicas: Range<u64>) -> Result<MarginalCounts> {
    check_rounds(setup, t)?;
    let single = TrackedSetup { placements: vec![setup.placements[0]], ..setup.clone() };
    let mut counts = MarginalCounts { shuffle: vec![0; setup.n], walk: vec![0; setup.n], samples: 0 };
    for r in replicas {
        let mut at = 0;
        single.run_shuffle(r, t, |round, states| {
            if round == t {
                at = states.iter().position(|s| s.tokens[1] == 1).expect("tracked token is conserved");
            }
        })?;
        counts.shuffle[at] += 1;
        let mut walk = WalkEnsemble::new(vec![single.placements[0]]);
        let mut rng = single.walk_rng(r);
        for p in single.matrices.iter().take(t as usize) {
            walk_step(&mut walk, p, &mut rng);
        }
        counts.walk[walk.positions[0]] += 1;
        counts.samples += 1;
    }
    Ok(counts)
}

/// Total-variation distance between the location laws of one token under
/// the shuffle and under an independent walk, both started at `start`.
pub fn marginal_equality_test(spec: &PatternSpec, t: u64, samples: u64, gamma: u64, start: usize, seed: u64) -> Result<StatTestReport> {
    let setup = TrackedSetup::new(spec, t, gamma, vec![start], seed)?;
    Ok(marginal_counts(&setup, t, 0..samples)?.report())
}

/// How often all tracked tokens were inside each target set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssociationCounts {
    pub joint: Vec<u64>,
    pub samples: u64,
}

impl AssociationCounts {
    pub fn merge(&mut self, other: &AssociationCounts) {
        for (a, b) in self.joint.iter_mut().zip(&other.joint) {
            *a += b;
        }
        self.samples += other.samples;
    }
}

fn check_targets(n: usize, targets: &[Vec<usize>]) -> Result<()> {
    for d in targets {
        if d.is_empty() || d.iter().any(|&v| v >= n) {
            return Err(invalid("target sets must be non-empty sets of nodes"));
        }
    }
    Ok(())
}

/// Counts replicas in which every tracked token is inside `D` at time `t`,
/// for each `D` in `targets`.
pub fn association_counts(setup: &TrackedSetup, targets: &[Vec<usize>], t: u64, replicas: Range<u64>) -> Result<AssociationCounts> {
    check_rounds(setup, t)?;
    check_targets(setup.n, targets)?;
    let b = setup.placements.len() as u64;
    let mut counts = AssociationCounts { joint: vec![0; targets.len()], samples: 0 };
    for r in replicas {
        setup.run_shuffle(r, t, |round, states| {
            if round == t {
                for (hits, d) in counts.joint.iter_mut().zip(targets) {
                    if d.iter().map(|&v| states[v].tokens[1]).sum::<u64>() == b {
                        *hits += 1;
                    }
                }
            }
        })?;
        counts.samples += 1;
    }
    Ok(counts)
}

/// Product over tracked tokens of the exact walk probability of being in
/// `target` at time `t`.
pub fn walk_product(setup: &TrackedSetup, target: &[usize], t: u64) -> f64 {
    setup
        .placements
        .iter()
        .map(|&start| {
            let law = setup.walk_distribution(start, t);
            target.iter().map(|&v| law[v]).sum::<f64>()
        })
        .product()
}

/// One report per target: shuffle joint frequency against the walk product.
pub fn association_reports(setup: &TrackedSetup, targets: &[Vec<usize>], t: u64, counts: &AssociationCounts) -> Vec<StatTestReport> {
    targets
        .iter()
        .zip(&counts.joint)
        .map(|(d, &hits)| {
            let joint = if counts.samples == 0 { 0.0 } else { hits as f64 / counts.samples as f64 };
            StatTestReport::new("negative_association", counts.samples, joint, walk_product(setup, d, t), binomial_slack(hits, counts.samples))
        })
        .collect()
}

pub fn negative_association_test(
    spec: &PatternSpec,
    placements: Vec<usize>,
    target: Vec<usize>,
    t: u64,
    samples: u64,
    gamma: u64,
    seed: u64,
) -> Result<StatTestReport> {
    if placements.len() < 2 {
        return Err(invalid("negative association needs at least two tokens"));
    }
    let setup = TrackedSetup::new(spec, t, gamma, placements, seed)?;
    let targets = vec![target];
    let counts = association_counts(&setup, &targets, t, 0..samples)?;
    Ok(association_reports(&setup, &targets, t, &counts).remove(0))
}

/// Histogram of `X = Σ_{i≤T} #(tracked tokens at u at time i·t_mix)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TailHistogram {
    pub counts: Vec<u64>,
    pub samples: u64,
}

impl TailHistogram {
    pub fn merge(&mut self, other: &TailHistogram) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.samples += other.samples;
    }

    /// Number of samples with `X >= threshold`.
    pub fn at_least(&self, threshold: f64) -> u64 {
        self.counts.iter().enumerate().filter(|&(x, _)| x as f64 >= threshold).map(|(_, &c)| c).sum()
    }
}

/// `(1/n + 1/n⁵)·|B|·T`.
pub fn chernoff_mean(n: usize, tokens: usize, trade_off: u64) -> f64 {
    let n = n as f64;
    (1.0 / n + libm::pow(n, -5.0)) * tokens as f64 * trade_off as f64
}

/// Requires the setup to cover `T·t_mix` rounds.
pub fn tail_histogram(setup: &TrackedSetup, u: usize, t_mix: u64, trade_off: u64, replicas: Range<u64>) -> Result<TailHistogram> {
    if u >= setup.n || t_mix == 0 || trade_off == 0 {
        return Err(invalid("need a node of the graph and t_mix, T >= 1"));
    }
    let horizon = t_mix * trade_off;
    check_rounds(setup, horizon)?;
    let b = setup.placements.len() as u64;
    let mut hist = TailHistogram { counts: vec![0; (b * trade_off + 1) as usize], samples: 0 };
    for r in replicas {
        let mut x = 0u64;
        setup.run_shuffle(r, horizon, |round, states| {
            if round > 0 && round % t_mix == 0 {
                x += states[u].tokens[1];
            }
        })?;
        hist.counts[x as usize] += 1;
        hist.samples += 1;
    }
    Ok(hist)
}

/// `Pr[X >= (1+δ)μ]` against `exp(-δ²μ/3)`.
pub fn chernoff_report(hist: &TailHistogram, n: usize, tokens: usize, trade_off: u64, delta: f64) -> StatTestReport {
    let mu = chernoff_mean(n, tokens, trade_off);
    let hits = hist.at_least((1.0 + delta) * mu);
    let observed = if hist.samples == 0 { 0.0 } else { hits as f64 / hist.samples as f64 };
    let bound = libm::exp(-delta * delta * mu / 3.0);
    let mut name = String::from("chernoff_tail_delta_");
    name.push_str(&delta.to_string());
    StatTestReport::new(name, hist.samples, observed, bound, binomial_slack(hits, hist.samples))
}

#[allow(clippy::too_many_arguments)]
pub fn chernoff_tail_check(
    spec: &PatternSpec,
    placements: Vec<usize>,
    u: usize,
    t_mix: u64,
    trade_off: u64,
    delta: f64,
    samples: u64,
    gamma: u64,
    seed: u64,
) -> Result<StatTestReport> {
    if !(delta > 0.0) {
        return Err(invalid("δ must be positive"));
    }
    let tokens = placements.len();
    let setup = TrackedSetup::new(spec, t_mix * trade_off, gamma, placements, seed)?;
    let hist = tail_histogram(&setup, u, t_mix, trade_off, 0..samples)?;
    Ok(chernoff_report(&hist, spec.n(), tokens, trade_off, delta))
}

/// Counter thresholds after `updates` updates: plurality-opinion nodes
/// should end at or above `upper`, all others at or below `lower`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub lower: f64,
    pub upper: f64,
    pub updates: u64,
}

/// Thresholds with `U = ⌈c·T⌉` updates.
pub fn counter_thresholds(n: usize, counts: &[usize], trade_off: u64, gamma: u64, c: f64) -> Result<Thresholds> {
    let updates = libm::ceil(c * trade_off as f64) as u64;
    counter_thresholds_with_updates(n, counts, trade_off, gamma, c, updates)
}

/// `ℓ_⊥ = μ₂ + √(c²·log n·T·γ·n₂/n)` and
/// `ℓ_⊤ = U·γ - μ' - √(c²·log n·T·γ·(n-n₁)/n)`, with
/// `μᵢ = (1/n + 1/n⁵)·c·T·γ·nᵢ` and `μ' = (1/n + 1/n⁵)·c·T·γ·(n-n₁)`.
pub fn counter_thresholds_with_updates(n: usize, counts: &[usize], trade_off: u64, gamma: u64, c: f64, updates: u64) -> Result<Thresholds> {
    if counts.iter().sum::<usize>() != n || n < 2 {
        return Err(invalid("counts must sum to n >= 2"));
    }
    if !(c >= 12.0) {
        return Err(invalid("c must be at least 12"));
    }
    let mut sorted = counts.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let n1 = sorted[0];
    let n2 = sorted.get(1).copied().unwrap_or(0);
    if n1 <= n2 {
        return Err(invalid("the largest opinion must be strictly larger than the second"));
    }
    let nf = n as f64;
    let scale = (1.0 / nf + libm::pow(nf, -5.0)) * c * trade_off as f64 * gamma as f64;
    let spread = c * c * libm::log2(nf) * trade_off as f64 * gamma as f64 / nf;
    let lower = scale * n2 as f64 + libm::sqrt(spread * n2 as f64);
    let rest = (n - n1) as f64;
    let upper = updates as f64 * gamma as f64 - scale * rest - libm::sqrt(spread * rest);
    if !(upper > lower) {
        return Err(Error::ThresholdInversion { lower, upper });
    }
    Ok(Thresholds { lower, upper, updates })
}

/// True iff every node of the plurality opinion has counter `>= upper` and
/// every other node has counter `<= lower`.
pub fn counters_separated(opinions: &[usize], counters: &[u64], plurality: usize, th: &Thresholds) -> bool {
    opinions.iter().zip(counters).all(|(&o, &c)| {
        if o == plurality {
            c as f64 >= th.upper
        } else {
            c as f64 <= th.lower
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, GraphKind};
    use crate::pattern::ActiveEdgeSet;
    use crate::rng::seeded;

    fn k(n: usize) -> PatternSpec {
        PatternSpec::diffusion(build_graph(GraphKind::Complete, n, 0, 0).unwrap(), 0)
    }

    #[test]
    fn identity_walk_does_not_move() {
        let p = TransitionMatrix::from_active(&ActiveEdgeSet::empty(1), 3, 1).unwrap();
        let mut e = WalkEnsemble::new(vec![0, 1, 2, 2]);
        walk_step(&mut e, &p, &mut seeded(1));
        assert_eq!(e.positions, vec![0, 1, 2, 2]);
        assert_eq!(e.steps, 1);
    }

    #[test]
    fn single_edge_walk_is_fair() {
        let p = TransitionMatrix::from_active(&ActiveEdgeSet::new(1, vec![(0, 1)]), 2, 1).unwrap();
        let mut rng = seeded(2);
        let trials = 20_000;
        let mut moved = 0;
        for _ in 0..trials {
            let mut e = WalkEnsemble::new(vec![0]);
            walk_step(&mut e, &p, &mut rng);
            moved += (e.positions[0] == 1) as u64;
        }
        let f = moved as f64 / trials as f64;
        assert!((f - 0.5).abs() < 4.0 * (0.25f64 / trials as f64).sqrt());
    }

    #[test]
    fn tv_at_time_zero_is_exactly_zero() {
        let r = marginal_equality_test(&k(4), 0, 100, 6, 2, 9).unwrap();
        assert_eq!(r.observed, 0.0);
        assert!(r.passed());
    }

    #[test]
    fn k2_shuffle_splits_two_tokens() {
        let spec = k(2);
        let r = negative_association_test(&spec, vec![0, 0], vec![0], 1, 2000, 2, 3).unwrap();
        assert_eq!(r.observed, 0.0);
        assert!((r.bound - 0.25).abs() < 1e-12);
        assert!(r.passed());
    }

    #[test]
    fn whole_graph_target_is_certain() {
        let r = negative_association_test(&k(4), vec![0, 1, 1], vec![0, 1, 2, 3], 2, 500, 6, 4).unwrap();
        assert_eq!(r.observed, 1.0);
        assert!((r.bound - 1.0).abs() < 1e-12);
        assert!(r.passed());
    }

    #[test]
    fn merged_ranges_equal_one_run() {
        let setup = TrackedSetup::new(&k(4), 3, 6, vec![1], 11).unwrap();
        let whole = marginal_counts(&setup, 3, 0..300).unwrap();
        let mut parts = marginal_counts(&setup, 3, 0..120).unwrap();
        parts.merge(&marginal_counts(&setup, 3, 120..300).unwrap());
        assert_eq!(whole, parts);
    }

    #[test]
    fn chernoff_mean_example() {
        assert!((chernoff_mean(4, 4, 5) - (0.25 + 1.0 / 1024.0) * 20.0).abs() < 1e-12);
    }

    #[test]
    fn huge_delta_has_empty_tail() {
        let r = chernoff_tail_check(&k(4), vec![0, 1, 2, 3], 0, 2, 5, 100.0, 300, 6, 5).unwrap();
        assert_eq!(r.observed, 0.0);
        assert!(r.passed());
    }

    #[test]
    fn thresholds_unanimous_and_inverted() {
        let th = counter_thresholds(10, &[10], 1, 100, 12.0).unwrap();
        assert_eq!(th.lower, 0.0);
        assert_eq!(th.upper, 1200.0);
        assert!(matches!(counter_thresholds(10, &[6, 4], 1, 2, 12.0), Err(Error::ThresholdInversion { .. })));
        assert!(counter_thresholds(10, &[5, 5], 1, 100, 12.0).is_err());
        assert!(counter_thresholds(10, &[6, 4], 1, 100, 11.0).is_err());
    }

    #[test]
    fn separation_check() {
        let th = Thresholds { lower: 10.0, upper: 20.0, updates: 1 };
        assert!(counters_separated(&[0, 1, 0], &[20, 10, 25], 0, &th));
        assert!(!counters_separated(&[0, 1, 0], &[19, 10, 25], 0, &th));
        assert!(!counters_separated(&[0, 1, 0], &[20, 11, 25], 0, &th));
    }

    #[test]
    fn reports_are_self_consistent() {
        let r = StatTestReport::new("x", 10, 0.5, 0.4, 0.1);
        assert!(r.passed() && r.is_consistent());
        let r = StatTestReport::new("x", 10, 0.51, 0.4, 0.1);
        assert!(!r.passed() && r.is_consistent());
    }
}
