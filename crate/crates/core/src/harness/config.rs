use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::learners::{LearnerConfig, LearnerKind};
use crate::nn::Architecture;
use crate::streams::{Protocol, ProtocolConfig};

/// When accuracy snapshots are taken during a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EvalCadence {
    /// After every task, filling the accuracy matrices.
    #[default]
    EveryTask,
    /// Only after the last task.
    FinalOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub protocol: ProtocolConfig,
    pub learner: LearnerKind,
    /// `seed` and `buffer_budget` are overwritten per run.
    pub learner_config: LearnerConfig,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    /// Empty for learners without replay.
    #[serde(default)]
    pub buffer_sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Not part of the config hash.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub eval_cadence: EvalCadence,
    /// Fraction of each task's training data held out for validation.
    #[serde(default)]
    pub validation_fraction: Option<f64>,
}

fn default_hidden() -> Vec<usize> {
    vec![100, 100]
}

/// `n` consecutive seeds starting at `base`.
/// Hex SHA-256 of the compact JSON encoding of `value`.
pub fn content_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_string(value).expect("value serialises");
    Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn default_seeds(base: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| base + i).collect()
}

impl ExperimentConfig {
    pub fn architecture(&self, num_classes: usize) -> Result<Architecture> {
        Architecture::new(784, self.hidden.clone(), num_classes)
    }

    /// Buffer budget for this config; errors if several are listed.
    pub fn buffer(&self) -> Result<Option<usize>> {
        match (self.learner.uses_replay(), self.buffer_sizes.as_slice()) {
            (false, _) => Ok(None),
            (true, [b]) => Ok(Some(*b)),
            (true, []) => Err(Error::InvalidConfig(format!("{} needs a buffer size", self.learner.name()))),
            (true, _) => Err(Error::InvalidConfig("expand multi-buffer configs first".into())),
        }
    }

    /// One config per buffer size (or the config itself without replay).
    pub fn expand(&self) -> Vec<ExperimentConfig> {
        if !self.learner.uses_replay() || self.buffer_sizes.len() <= 1 {
            return vec![self.clone()];
        }
        self.buffer_sizes
            .iter()
            .map(|&b| {
                let mut c = self.clone();
                c.buffer_sizes = vec![b];
                c
            })
            .collect()
    }

    /// Learner settings for one seed.
    pub fn learner_config_for(&self, seed: u64) -> Result<LearnerConfig> {
        let mut lc = self.learner_config.clone();
        lc.seed = seed;
        if let Some(b) = self.buffer()? {
            lc.buffer_budget = b;
        }
        Ok(lc)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("no seeds".into()));
        }
        if let Some(f) = self.validation_fraction {
            if !(0.0..1.0).contains(&f) {
                return Err(Error::InvalidConfig(format!("validation fraction {f} outside [0, 1)")));
            }
        }
        for c in self.expand() {
            c.buffer()?;
            c.learner_config_for(c.seeds[0])?.validate(c.learner)?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, with the output directory
    /// cleared.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        content_hash(&c)
    }

    pub fn protocol(&self) -> Protocol {
        self.protocol.protocol
    }
}
