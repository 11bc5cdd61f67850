use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::runner::{run_experiment, RunOptions, RunRecord};
use crate::error::{Error, Result};
use crate::learners::{LearnerKind, SingleMemoryConfig};
use crate::semantic::MemoryPairConfig;
use crate::streams::MnistData;

/// Held-out share of each task's training data used by sweeps.
pub const SWEEP_VALIDATION_FRACTION: f64 = 0.1;

/// Values to try per hyperparameter; an empty list keeps the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    #[serde(default)]
    pub lambda: Vec<f64>,
    #[serde(default)]
    pub alpha_stable: Vec<f64>,
    #[serde(default)]
    pub alpha_plastic: Vec<f64>,
    #[serde(default)]
    pub rate_stable: Vec<f64>,
    #[serde(default)]
    pub rate_plastic: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub lambda: f64,
    pub alpha_stable: f64,
    pub alpha_plastic: f64,
    pub rate_stable: f64,
    pub rate_plastic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedPoint {
    pub point: SweepPoint,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    /// Sorted by config hash.
    pub records: Vec<RunRecord>,
    pub skipped: Vec<SkippedPoint>,
}

impl SweepReport {
    /// Record with the highest mean validation accuracy.
    pub fn best(&self) -> Option<&RunRecord> {
        self.records.iter().max_by(|a, b| {
            let va = a.validation.map_or(f64::NEG_INFINITY, |s| s.mean);
            let vb = b.validation.map_or(f64::NEG_INFINITY, |s| s.mean);
            va.total_cmp(&vb)
        })
    }
}

fn base_point(config: &ExperimentConfig) -> SweepPoint {
    let lc = &config.learner_config;
    match (lc.memory_pair, lc.single_memory) {
        (Some(p), _) => SweepPoint {
            lambda: lc.lambda,
            alpha_stable: p.alpha_stable,
            alpha_plastic: p.alpha_plastic,
            rate_stable: p.rate_stable,
            rate_plastic: p.rate_plastic,
        },
        (None, Some(m)) => SweepPoint {
            lambda: lc.lambda,
            alpha_stable: m.alpha,
            alpha_plastic: m.alpha,
            rate_stable: m.rate,
            rate_plastic: m.rate,
        },
        (None, None) => SweepPoint {
            lambda: lc.lambda,
            alpha_stable: 0.99,
            alpha_plastic: 0.99,
            rate_stable: 1.0,
            rate_plastic: 1.0,
        },
    }
}

fn axis(values: &[f64], base: f64) -> Vec<f64> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

/// Cartesian product of the grid, in lexicographic axis order.
pub fn grid_points(config: &ExperimentConfig, grid: &SweepGrid) -> Vec<SweepPoint> {
    let b = base_point(config);
    let mut out = Vec::new();
    for &lambda in &axis(&grid.lambda, b.lambda) {
        for &alpha_stable in &axis(&grid.alpha_stable, b.alpha_stable) {
            for &alpha_plastic in &axis(&grid.alpha_plastic, b.alpha_plastic) {
                for &rate_stable in &axis(&grid.rate_stable, b.rate_stable) {
                    for &rate_plastic in &axis(&grid.rate_plastic, b.rate_plastic) {
                        out.push(SweepPoint {
                            lambda,
                            alpha_stable,
                            alpha_plastic,
                            rate_stable,
                            rate_plastic,
                        });
                    }
                }
            }
        }
    }
    out
}

/// `config` with `point` applied, or the reason the point is infeasible.
pub fn apply_point(config: &ExperimentConfig, point: &SweepPoint) -> Result<ExperimentConfig> {
    let mut c = config.clone();
    let lc = &mut c.learner_config;
    lc.lambda = point.lambda;
    match config.learner {
        LearnerKind::ClsEr => {
            lc.memory_pair = Some(MemoryPairConfig {
                alpha_plastic: point.alpha_plastic,
                alpha_stable: point.alpha_stable,
                rate_plastic: point.rate_plastic,
                rate_stable: point.rate_stable,
            })
        }
        LearnerKind::MeanEr => {
            lc.single_memory = Some(SingleMemoryConfig {
                alpha: point.alpha_stable,
                rate: point.rate_stable,
            })
        }
        _ => {}
    }
    c.validate()?;
    Ok(c)
}

/// Runs every feasible grid point with a held-out validation split.
pub fn sweep(config: &ExperimentConfig, grid: &SweepGrid, data: Arc<MnistData>, opts: &RunOptions) -> Result<SweepReport> {
    let mut base = config.clone();
    base.validation_fraction.get_or_insert(SWEEP_VALIDATION_FRACTION);
    let points = grid_points(&base, grid);
    if points.is_empty() {
        return Err(Error::InvalidConfig("empty sweep grid".into()));
    }
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for point in points {
        match apply_point(&base, &point) {
            Ok(c) => records.push(run_experiment(&c, data.clone(), opts)?),
            Err(Error::InvalidConfig(reason)) => {
                log::warn!("skipping {point:?}: {reason}");
                skipped.push(SkippedPoint { point, reason });
            }
            Err(e) => return Err(e),
        }
    }
    records.sort_by(|a, b| a.config_hash.cmp(&b.config_hash));
    Ok(SweepReport { records, skipped })
}
