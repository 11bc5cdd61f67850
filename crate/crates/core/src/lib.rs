//! Dual-memory experience replay for continual learning.
//!
//! The working network learns from a non-stationary stream; two
//! exponential-moving-average copies of its weights (a fast "plastic" and a
//! slow "stable" memory) supply consistency targets on exemplars replayed from a
//! reservoir-sampled episodic buffer. The crate also ships the baselines (ER,
//! Mean-ER, SGD, JOINT), the MNIST-family protocols and the analysis metrics
//! needed to benchmark them.
//!
//! Module map:
//!
//! * [`nn`] dense ReLU network, losses, exact gradients, SGD
//! * [`replay`] reservoir-sampled episodic memory
//! * [`semantic`] stochastic EMA semantic memories
//! * [`learners`] training strategies behind one boundary-free interface
//! * [`streams`] MNIST loading and task-stream construction
//! * [`metrics`] accuracy, task probabilities, calibration, perturbation curves
//! * [`harness`] experiment configs, multi-seed runs, sweeps, checkpoints, reports

pub mod error;
pub mod exec;
pub mod harness;
pub mod learners;
pub mod metrics;
pub mod nn;
pub mod replay;
pub mod seeding;
pub mod semantic;
pub mod streams;

pub use error::{Error, Result};

/// Version string embedded in every artifact written to disk.
pub const CODE_VERSION: &str = concat!("clser-", env!("CARGO_PKG_VERSION"));
