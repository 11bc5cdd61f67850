use serde::{Deserialize, Serialize};

use super::{argmax, over_logits};
use crate::error::Result;
use crate::exec::Execution;
use crate::nn::{softmax_rows, Network};
use crate::streams::{SampleRef, TaskStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// Mean max-softmax confidence in the bin (0 when empty).
    pub confidence: f64,
    /// Fraction of correct predictions in the bin (0 when empty).
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub bins: Vec<CalibrationBin>,
    pub ece: f64,
    pub total: usize,
}

/// Expected calibration error from `(confidence, correct)` pairs using
/// `n_bins` equal-width bins on `[0, 1]`; confidence `c` lands in bin
/// `min(floor(c * n_bins), n_bins - 1)`.
pub fn calibration_from_scores(scores: &[(f64, bool)], n_bins: usize) -> CalibrationReport {
    let n_bins = n_bins.max(1);
    let mut count = vec![0usize; n_bins];
    let mut conf = vec![0.0; n_bins];
    let mut hits = vec![0usize; n_bins];
    for &(c, ok) in scores {
        let b = ((c * n_bins as f64).floor() as usize).min(n_bins - 1);
        count[b] += 1;
        conf[b] += c;
        hits[b] += ok as usize;
    }
    let total = scores.len();
    let mut ece = 0.0;
    let bins = (0..n_bins)
        .map(|b| {
            let (confidence, accuracy) = if count[b] == 0 {
                (0.0, 0.0)
            } else {
                (conf[b] / count[b] as f64, hits[b] as f64 / count[b] as f64)
            };
            if total > 0 {
                ece += count[b] as f64 / total as f64 * (accuracy - confidence).abs();
            }
            CalibrationBin {
                lower: b as f64 / n_bins as f64,
                upper: (b + 1) as f64 / n_bins as f64,
                count: count[b],
                confidence,
                accuracy,
            }
        })
        .collect();
    CalibrationReport { bins, ece, total }
}

/// Reliability bins and ECE of `model` on `refs`.
pub fn calibration(
    model: &Network,
    stream: &TaskStream,
    refs: &[SampleRef],
    n_bins: usize,
    exec: Execution,
) -> Result<CalibrationReport> {
    let parts = over_logits(model.architecture(), model.params(), stream, refs, exec, |z, labels| {
        let p = softmax_rows(z.view());
        p.rows()
            .into_iter()
            .zip(labels)
            .map(|(row, &y)| {
                let k = argmax(row);
                (row[k], k == y)
            })
            .collect::<Vec<_>>()
    })?;
    let scores: Vec<(f64, bool)> = parts.into_iter().flatten().collect();
    Ok(calibration_from_scores(&scores, n_bins))
}
