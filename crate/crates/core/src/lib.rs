//! Slotted-time simulator for scheduling a single wireless receiver shared by
//! deadline-constrained users and minimum-throughput users under average
//! power budgets.
//!
//! Two schedulers are provided: a drift-plus-penalty power controller
//! ([`scheduler::DpcState`]) and the largest-debt-first baseline
//! ([`scheduler::LdfState`]). [`sim`] drives them over seeded sample paths,
//! [`analysis`] checks their behaviour against theory-derived bounds and a
//! clairvoyant oracle, and [`config`], [`preset`], [`emit`] back the
//! `dpcsim` command line tool.

pub mod analysis;
pub mod config;
pub mod emit;
mod error;
pub mod model;
pub mod preset;
pub mod rng;
pub mod scheduler;
pub mod sim;

pub use error::{Error, Result};
