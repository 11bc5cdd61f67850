//! Per-setting hyperparameters for the MNIST-family benchmarks.

use super::config::{default_seeds, EvalCadence, ExperimentConfig};
use crate::error::{Error, Result};
use crate::learners::{LearnerConfig, LearnerKind, SingleMemoryConfig};
use crate::semantic::MemoryPairConfig;
use crate::streams::{Protocol, ProtocolConfig};

/// lr, batch, memory batch, lambda, alpha_s, alpha_p, r_s, r_p
type Row = (f64, usize, usize, f64, f64, f64, f64, f64);

fn cls_er_row(protocol: Protocol, buffer: usize) -> Option<Row> {
    use Protocol::*;
    Some(match (protocol, buffer) {
        (SMnist, 200) => (0.03, 10, 128, 2.0, 0.99, 0.99, 0.9, 1.0),
        (SMnist, 500) => (0.1, 10, 32, 2.0, 0.99, 0.99, 0.9, 1.0),
        (SMnist, 5120) => (0.1, 10, 32, 2.0, 0.99, 0.99, 0.8, 1.0),
        (RMnist, 200 | 500 | 5120) => (0.2, 128, 128, 0.75, 0.999, 0.99, 1.0, 1.0),
        (PMnist, 200 | 500) => (0.2, 128, 128, 1.0, 0.99, 0.99, 0.8, 1.0),
        (PMnist, 5120) => (0.2, 128, 128, 1.0, 0.99, 0.99, 0.9, 1.0),
        (Mnist360, 200) => (0.2, 16, 16, 0.75, 0.999, 0.99, 1.0, 1.0),
        (Mnist360, 500) => (0.2, 16, 32, 1.25, 0.99, 0.99, 0.9, 1.0),
        (Mnist360, 1000) => (0.2, 16, 128, 0.75, 0.99, 0.99, 0.9, 1.0),
        _ => return None,
    })
}

/// lr, memory batch, lambda, alpha, r
fn mean_er_row(protocol: Protocol, buffer: usize) -> Option<(f64, usize, f64, f64, f64)> {
    use Protocol::*;
    Some(match (protocol, buffer) {
        (SMnist, 200) => (0.03, 128, 2.0, 0.99, 1.0),
        (SMnist, 500 | 5120) => (0.1, 32, 2.0, 0.99, 1.0),
        (RMnist, 200 | 500 | 5120) => (0.2, 128, 0.75, 0.999, 1.0),
        (PMnist, 200 | 5120) => (0.2, 128, 1.0, 0.99, 0.9),
        (PMnist, 500) => (0.2, 128, 1.0, 0.99, 1.0),
        _ => return None,
    })
}

/// Learning rate and batch size of the per-setting training scheme, used
/// by the learners that have no settings of their own.
fn scheme(protocol: Protocol) -> (f64, usize) {
    match protocol {
        Protocol::SMnist => (0.03, 10),
        Protocol::RMnist | Protocol::PMnist => (0.2, 128),
        Protocol::Mnist360 => (0.2, 16),
        Protocol::Gcil => (0.1, 32),
    }
}

/// JOINT makes one pass over the union of all tasks.
const JOINT_EPOCHS: usize = 1;

fn base(protocol: Protocol, learner: LearnerKind, lc: LearnerConfig, buffer: Option<usize>) -> ExperimentConfig {
    let eval_cadence = match protocol {
        Protocol::RMnist | Protocol::PMnist => EvalCadence::FinalOnly,
        _ => EvalCadence::EveryTask,
    };
    ExperimentConfig {
        protocol: ProtocolConfig::new(protocol),
        learner,
        learner_config: lc,
        hidden: vec![100, 100],
        buffer_sizes: buffer.into_iter().collect(),
        seeds: default_seeds(0, 10),
        output_dir: None,
        eval_cadence,
        validation_fraction: None,
    }
}

fn plain(lr: f64, batch: usize, memory_batch: usize, budget: usize, epochs: usize) -> LearnerConfig {
    LearnerConfig {
        lr,
        lambda: 0.0,
        batch_size: batch,
        memory_batch_size: memory_batch,
        buffer_budget: budget,
        memory_pair: None,
        single_memory: None,
        epochs_per_task: epochs,
        seed: 0,
    }
}

/// Published (or scheme-derived) configuration for one benchmark cell.
/// `buffer` is ignored for SGD and JOINT.
pub fn preset(protocol: Protocol, learner: LearnerKind, buffer: usize) -> Result<ExperimentConfig> {
    let missing = || Error::InvalidConfig(format!("no preset for {} on {} with buffer {buffer}", learner.name(), protocol.name()));
    Ok(match learner {
        LearnerKind::ClsEr => {
            let (lr, b, mb, lambda, a_s, a_p, r_s, r_p) = cls_er_row(protocol, buffer).ok_or_else(missing)?;
            let mut lc = plain(lr, b, mb, buffer, 1);
            lc.lambda = lambda;
            lc.memory_pair = Some(MemoryPairConfig {
                alpha_plastic: a_p,
                alpha_stable: a_s,
                rate_plastic: r_p,
                rate_stable: r_s,
            });
            base(protocol, learner, lc, Some(buffer))
        }
        LearnerKind::MeanEr => {
            let (lr, mb, lambda, alpha, rate) = mean_er_row(protocol, buffer).ok_or_else(missing)?;
            let (_, b) = scheme(protocol);
            let mut lc = plain(lr, b, mb, buffer, 1);
            lc.lambda = lambda;
            lc.single_memory = Some(SingleMemoryConfig { alpha, rate });
            base(protocol, learner, lc, Some(buffer))
        }
        LearnerKind::Er => {
            let (lr, b, mb) = match cls_er_row(protocol, buffer) {
                Some((lr, b, mb, ..)) => (lr, b, mb),
                None => {
                    let (lr, b) = scheme(protocol);
                    (lr, b, b)
                }
            };
            base(protocol, learner, plain(lr, b, mb, buffer, 1), Some(buffer))
        }
        LearnerKind::Sgd => {
            let (lr, b) = scheme(protocol);
            base(protocol, learner, plain(lr, b, 1, 1, 1), None)
        }
        LearnerKind::Joint => {
            // learning rate of the buffer-500 setting
            let (lr, b) = match cls_er_row(protocol, 500) {
                Some((lr, b, ..)) => (lr, b),
                None => scheme(protocol),
            };
            base(protocol, learner, plain(lr, b, 1, 1, JOINT_EPOCHS), None)
        }
    })
}
