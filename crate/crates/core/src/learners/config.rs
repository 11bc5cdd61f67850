use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::semantic::MemoryPairConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerKind {
    ClsEr,
    Er,
    MeanEr,
    Sgd,
    Joint,
}

impl LearnerKind {
    pub fn uses_replay(self) -> bool {
        matches!(self, LearnerKind::ClsEr | LearnerKind::Er | LearnerKind::MeanEr)
    }

    pub fn name(self) -> &'static str {
        match self {
            LearnerKind::ClsEr => "cls-er",
            LearnerKind::Er => "er",
            LearnerKind::MeanEr => "mean-er",
            LearnerKind::Sgd => "sgd",
            LearnerKind::Joint => "joint",
        }
    }
}

impl std::str::FromStr for LearnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cls-er" | "clser" | "cls_er" => Ok(LearnerKind::ClsEr),
            "er" => Ok(LearnerKind::Er),
            "mean-er" | "meaner" | "mean_er" => Ok(LearnerKind::MeanEr),
            "sgd" => Ok(LearnerKind::Sgd),
            "joint" => Ok(LearnerKind::Joint),
            other => Err(Error::InvalidConfig(format!("unknown learner {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleMemoryConfig {
    pub alpha: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub lr: f64,
    pub lambda: f64,
    pub batch_size: usize,
    pub memory_batch_size: usize,
    pub buffer_budget: usize,
    #[serde(default)]
    pub memory_pair: Option<MemoryPairConfig>,
    #[serde(default)]
    pub single_memory: Option<SingleMemoryConfig>,
    pub epochs_per_task: usize,
    pub seed: u64,
}

impl LearnerConfig {
    pub fn validate(&self, kind: LearnerKind) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.lr));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda {} must be non-negative", self.lambda));
        }
        if self.batch_size == 0 || self.epochs_per_task == 0 {
            return bad("batch size and epochs must be positive".into());
        }
        if kind.uses_replay() && (self.buffer_budget == 0 || self.memory_batch_size == 0) {
            return bad(format!("{} needs a positive buffer and memory batch", kind.name()));
        }
        match kind {
            LearnerKind::ClsEr => match &self.memory_pair {
                Some(p) => p.validate(),
                None => bad("cls-er needs memory_pair".into()),
            },
            LearnerKind::MeanEr => match &self.single_memory {
                Some(m) if (0.0..1.0).contains(&m.alpha) && m.rate > 0.0 && m.rate <= 1.0 => Ok(()),
                Some(m) => bad(format!("invalid single memory {m:?}")),
                None => bad("mean-er needs single_memory".into()),
            },
            _ => Ok(()),
        }
    }
}
