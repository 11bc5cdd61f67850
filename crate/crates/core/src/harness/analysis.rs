use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::report::line_svg;
use crate::error::Result;
use crate::exec::Execution;
use crate::metrics::{calibration, perturbation_curve, task_probabilities, CalibrationReport, NoiseMode, PerturbationCurve, DEFAULT_SIGMAS};
use crate::nn::{Batch, Network};
use crate::seeding;
use crate::streams::{SampleRef, TaskStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub bins: usize,
    pub sigmas: Vec<f64>,
    pub draws: usize,
    pub noise: NoiseMode,
    /// Training samples used for the perturbation curve.
    pub subset: usize,
    pub seed: u64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            bins: 10,
            sigmas: DEFAULT_SIGMAS.to_vec(),
            draws: 20,
            noise: NoiseMode::Absolute,
            subset: 2000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub task_probabilities: Vec<f64>,
    pub calibration: CalibrationReport,
    pub perturbation: PerturbationCurve,
}

impl Analysis {
    /// Largest over smallest task probability.
    pub fn probability_spread(&self) -> f64 {
        let max = self.task_probabilities.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = self.task_probabilities.iter().cloned().fold(f64::INFINITY, f64::min);
        max / min
    }
}

/// Seeded sample of the training data across all tasks.
pub fn train_subset(stream: &TaskStream, size: usize, seed: u64) -> Batch {
    let mut all: Vec<SampleRef> = stream.tasks.iter().flat_map(|t| t.train.iter().copied()).collect();
    all.shuffle(&mut seeding::rng(seed, &[seeding::tag("analysis-subset")]));
    all.truncate(size);
    stream.materialize(&all)
}

pub fn test_refs(stream: &TaskStream) -> Vec<SampleRef> {
    match &stream.pooled_test {
        Some(p) => p.clone(),
        None => stream.tasks.iter().flat_map(|t| t.test.iter().copied()).collect(),
    }
}

pub fn analyze(model: &Network, stream: &TaskStream, opts: &AnalysisOptions, exec: Execution) -> Result<Analysis> {
    let task_probabilities = task_probabilities(model, stream, exec)?;
    let calibration = calibration(model, stream, &test_refs(stream), opts.bins, exec)?;
    let subset = train_subset(stream, opts.subset, opts.seed);
    let perturbation = perturbation_curve(model, &subset, &opts.sigmas, opts.draws, opts.noise, opts.seed, exec)?;
    Ok(Analysis {
        task_probabilities,
        calibration,
        perturbation,
    })
}

/// Writes the analysis as JSON and CSV, plus SVG charts when asked.
pub fn write_analysis(a: &Analysis, dir: &Path, label: &str, provenance: &str, svg: bool) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    let json = dir.join(format!("{label}-analysis.json"));
    fs::write(&json, serde_json::to_string_pretty(&serde_json::json!({
        "provenance": provenance,
        "analysis": a,
    }))?)?;
    out.push(json);

    let p = dir.join(format!("{label}-task-probabilities.csv"));
    let mut w = csv::Writer::from_path(&p)?;
    w.write_record(["task", "probability"])?;
    for (t, v) in a.task_probabilities.iter().enumerate() {
        w.write_record([t.to_string(), v.to_string()])?;
    }
    w.flush()?;
    out.push(p);

    let p = dir.join(format!("{label}-calibration.csv"));
    let mut w = csv::Writer::from_path(&p)?;
    for b in &a.calibration.bins {
        w.serialize(b)?;
    }
    w.flush()?;
    out.push(p);

    let p = dir.join(format!("{label}-perturbation.csv"));
    let mut w = csv::Writer::from_path(&p)?;
    for pt in &a.perturbation.points {
        w.serialize(pt)?;
    }
    w.flush()?;
    out.push(p);

    if svg {
        let acc: Vec<(f64, f64)> = a.perturbation.points.iter().map(|p| (p.sigma, p.accuracy)).collect();
        let loss: Vec<(f64, f64)> = a.perturbation.points.iter().map(|p| (p.sigma, p.loss)).collect();
        let p = dir.join(format!("{label}-perturbation-accuracy.svg"));
        fs::write(&p, line_svg("Accuracy under weight noise", "sigma", "accuracy (%)", &[(label.to_string(), acc)], provenance))?;
        out.push(p);
        let p = dir.join(format!("{label}-perturbation-loss.svg"));
        fs::write(&p, line_svg("Loss under weight noise", "sigma", "loss", &[(label.to_string(), loss)], provenance))?;
        out.push(p);
        let diag: Vec<(f64, f64)> = vec![(0.0, 0.0), (1.0, 1.0)];
        let rel: Vec<(f64, f64)> = a
            .calibration
            .bins
            .iter()
            .filter(|b| b.count > 0)
            .map(|b| (b.confidence, b.accuracy))
            .collect();
        let p = dir.join(format!("{label}-reliability.svg"));
        let title = format!("Reliability (ECE {:.4})", a.calibration.ece);
        fs::write(&p, line_svg(&title, "confidence", "accuracy", &[("ideal".into(), diag), (label.to_string(), rel)], provenance))?;
        out.push(p);
        let probs: Vec<(f64, f64)> = a.task_probabilities.iter().enumerate().map(|(t, v)| ((t + 1) as f64, *v)).collect();
        let p = dir.join(format!("{label}-task-probabilities.svg"));
        fs::write(&p, line_svg("Task probabilities", "task", "probability", &[(label.to_string(), probs)], provenance))?;
        out.push(p);
    }
    Ok(out)
}
