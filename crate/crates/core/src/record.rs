use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::pattern::Model;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Shuffle,
    Balance,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Shuffle => "shuffle",
            Protocol::Balance => "balance",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shuffle" => Ok(Protocol::Shuffle),
            "balance" => Ok(Protocol::Balance),
            _ => Err(invalid(format!("unknown protocol `{s}`"))),
        }
    }
}

/// Protocol-specific end state of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "protocol", rename_all = "snake_case")]
pub enum Outcome {
    Shuffle {
        /// `c_u` after the last update.
        counters: Vec<u64>,
        /// `c_u` right after the update whose broadcast decided the final
        /// guesses.
        decision_counters: Vec<u64>,
        /// Number of updates performed.
        updates: u64,
    },
    Balance {
        /// Whether every dimension reached discrepancy `<= g`.
        reached: bool,
        /// Per-dimension discrepancy at the last round.
        final_discrepancy: Vec<u64>,
        /// `Some(all_correct)` when the target was reached.
        implication_held: Option<bool>,
    },
}

/// Outcome of one replica.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub n: usize,
    pub k: usize,
    pub alpha: f64,
    pub gamma: u64,
    pub model: Model,
    pub protocol: Protocol,
    pub t_mix: Option<u64>,
    pub rounds: u64,
    /// First round after which every guess is correct and stays correct
    /// through the last executed round.
    pub consensus_round: Option<u64>,
    pub all_correct: bool,
    pub memory_bits: u64,
    pub plurality: usize,
    pub guesses: Vec<usize>,
    pub outcome: Outcome,
}

/// Tracks the consensus round from correctness observations taken at every
/// round where guesses may change.
#[derive(Debug, Clone, Default)]
pub(crate) struct ConsensusTracker {
    correct_since: Option<u64>,
}

impl ConsensusTracker {
    pub(crate) fn observe(&mut self, round: u64, all_correct: bool) {
        if !all_correct {
            self.correct_since = None;
        } else if self.correct_since.is_none() {
            self.correct_since = Some(round);
        }
    }

    /// First observed round of the final all-correct streak.
    pub(crate) fn consensus_round(&self) -> Option<u64> {
        self.correct_since
    }
}

/// Per-opinion node counts of an assignment.
pub fn opinion_counts(assignment: &[usize], k: usize) -> Result<Vec<usize>> {
    let mut counts = alloc::vec![0; k];
    for (u, &o) in assignment.iter().enumerate() {
        if o >= k {
            return Err(invalid(format!("node {u} has opinion {o} outside 0..{k}")));
        }
        counts[o] += 1;
    }
    Ok(counts)
}

/// The strict plurality opinion, or an error when the top two tie.
pub fn plurality_opinion(counts: &[usize]) -> Result<usize> {
    let (best, &top) = counts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .ok_or_else(|| invalid("no opinions"))?;
    if counts.iter().enumerate().any(|(i, &c)| i != best && c == top) {
        return Err(invalid("no strict plurality: the two largest opinions tie"));
    }
    Ok(best)
}

/// `(n₁ - n₂) / n` with `n₂ = 0` when there is a single opinion.
pub fn initial_bias(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    let mut sorted: Vec<usize> = counts.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let second = sorted.get(1).copied().unwrap_or(0);
    (sorted[0] - second) as f64 / n as f64
}

/// Assigns opinions to nodes in contiguous blocks: the first `counts[0]`
/// nodes get opinion 0 and so on.
pub fn block_assignment(counts: &[usize]) -> Vec<usize> {
    counts.iter().enumerate().flat_map(|(o, &c)| core::iter::repeat_n(o, c)).collect()
}

/// `⌈x⌉`, but values within a relative `1e-9` of an integer snap to it.
pub(crate) fn ceil_tolerant(x: f64) -> f64 {
    let r = libm::round(x);
    if libm::fabs(x - r) <= 1e-9 * libm::fmax(1.0, libm::fabs(x)) {
        r
    } else {
        libm::ceil(x)
    }
}
