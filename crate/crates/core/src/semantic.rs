//! Stochastic exponential-moving-average copies of the working model.
//!
//! A semantic memory only ever changes through [`SemanticMemory::maybe_update`]:
//! with probability `rate` it moves to `alpha * self + (1 - alpha) * working`.
//! The plastic memory uses a high rate and/or short window and follows recent
//! tasks; the stable memory averages over a longer horizon and is used for
//! inference.

use ndarray::{Array2, ArrayView2};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{forward, Architecture, Network, ParamVector};
use crate::seeding::{self, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticMemory {
    params: ParamVector,
    alpha: f64,
    rate: f64,
    rng: Rng,
    updates: u64,
    calls: u64,
}

impl SemanticMemory {
    pub fn new(working: &ParamVector, alpha: f64, rate: f64, rng: Rng) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::InvalidConfig(format!("decay {alpha} outside [0, 1)")));
        }
        if !(rate > 0.0 && rate <= 1.0) {
            return Err(Error::InvalidConfig(format!("update rate {rate} outside (0, 1]")));
        }
        Ok(Self {
            params: working.clone(),
            alpha,
            rate,
            rng,
            updates: 0,
            calls: 0,
        })
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Number of EMA updates that actually fired.
    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn calls(&self) -> u64 {
        self.calls
    }

    /// Consumes exactly one uniform draw; applies the EMA step if the draw
    /// falls below the update rate. Returns whether the update fired.
    pub fn maybe_update(&mut self, working: &ParamVector) -> Result<bool> {
        self.params.ensure_same_layout(working)?;
        let u: f64 = self.rng.random();
        self.calls += 1;
        let fire = u < self.rate;
        if fire {
            self.params.ema_toward(working, self.alpha)?;
            self.updates += 1;
        }
        Ok(fire)
    }

    /// Read-only network view; cloning the parameters keeps the memory
    /// itself unreachable by gradient updates.
    pub fn as_network(&self, arch: &Architecture) -> Result<Network> {
        Network::new(arch.clone(), self.params.clone())
    }

    pub fn logits(&self, arch: &Architecture, inputs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        forward(arch, &self.params, inputs)
    }
}

/// Decay and update-rate settings for the plastic/stable pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryPairConfig {
    pub alpha_plastic: f64,
    pub alpha_stable: f64,
    pub rate_plastic: f64,
    pub rate_stable: f64,
}

impl MemoryPairConfig {
    /// The plastic memory must be at least as fast as the stable one on
    /// both knobs (`rate_plastic >= rate_stable`, `alpha_plastic <=
    /// alpha_stable`) and strictly faster on at least one of them.
    pub fn validate(&self) -> Result<()> {
        for a in [self.alpha_plastic, self.alpha_stable] {
            if !(0.0..1.0).contains(&a) {
                return Err(Error::InvalidConfig(format!("decay {a} outside [0, 1)")));
            }
        }
        for r in [self.rate_plastic, self.rate_stable] {
            if !(r > 0.0 && r <= 1.0) {
                return Err(Error::InvalidConfig(format!("update rate {r} outside (0, 1]")));
            }
        }
        if self.rate_plastic < self.rate_stable {
            return Err(Error::InvalidConfig(format!(
                "plastic rate {} below stable rate {}",
                self.rate_plastic, self.rate_stable
            )));
        }
        if self.alpha_plastic > self.alpha_stable {
            return Err(Error::InvalidConfig(format!(
                "plastic decay {} above stable decay {}",
                self.alpha_plastic, self.alpha_stable
            )));
        }
        if self.rate_plastic == self.rate_stable && self.alpha_plastic == self.alpha_stable {
            return Err(Error::InvalidConfig(format!(
                "plastic and stable memories identical (rate {}, decay {})",
                self.rate_plastic, self.alpha_plastic
            )));
        }
        Ok(())
    }
}

/// Both memories start as exact copies of `working`, each with its own
/// generator derived from `seed`.
pub fn init_pair(
    working: &ParamVector,
    config: &MemoryPairConfig,
    seed: u64,
) -> Result<(SemanticMemory, SemanticMemory)> {
    config.validate()?;
    let plastic = SemanticMemory::new(
        working,
        config.alpha_plastic,
        config.rate_plastic,
        seeding::rng(seed, &[seeding::tag("plastic")]),
    )?;
    let stable = SemanticMemory::new(
        working,
        config.alpha_stable,
        config.rate_stable,
        seeding::rng(seed, &[seeding::tag("stable")]),
    )?;
    Ok((plastic, stable))
}
