//! Plurality consensus on dynamic graphs via token shuffling and load
//! balancing. Allocation is required; the standard library is not.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod balance;
pub mod error;
pub mod graph;
pub mod oracle;
pub mod pattern;
pub mod record;
pub mod rng;
mod sampling;
pub mod shuffle;
pub mod smoothing;

pub use error::{Error, Result};
pub use graph::{build_graph, Graph, GraphKind};
pub use pattern::{ActiveEdgeSet, Model, PatternSpec};
pub use record::{Outcome, Protocol, RunRecord};
