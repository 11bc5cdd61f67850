//! Evaluation and analysis: accuracy (single-head, argmax over every
//! class), accuracy matrices, task probabilities, calibration and
//! weight-perturbation robustness.

mod calibration;
mod perturbation;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{chunks, map_indexed, Execution};
use crate::nn::{forward, softmax_rows, Architecture, Network, ParamVector};
use crate::streams::{SampleRef, TaskStream};

pub use calibration::{calibration, calibration_from_scores, CalibrationBin, CalibrationReport};
pub use perturbation::{perturbation_curve, NoiseMode, PerturbationCurve, PerturbationPoint, DEFAULT_SIGMAS};

/// Rows per evaluation chunk.
pub const EVAL_CHUNK: usize = 512;

/// Index of the largest entry; the first one wins ties.
pub fn argmax(row: ndarray::ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn count_correct(logits: ArrayView2<'_, f64>, labels: &[usize]) -> usize {
    logits
        .rows()
        .into_iter()
        .zip(labels)
        .filter(|(row, &y)| argmax(*row) == y)
        .count()
}

/// Applies `f` to the logits of each chunk of `refs`, in chunk order.
pub(crate) fn over_logits<R, F>(
    arch: &Architecture,
    params: &ParamVector,
    stream: &TaskStream,
    refs: &[SampleRef],
    exec: Execution,
    f: F,
) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(Array2<f64>, &[usize]) -> R + Sync + Send,
{
    let ranges = chunks(refs.len(), EVAL_CHUNK);
    map_indexed(exec, ranges.len(), |k| {
        let batch = stream.materialize(&refs[ranges[k].clone()]);
        let logits = forward(arch, params, batch.inputs.view())?;
        Ok(f(logits, &batch.labels))
    })
    .into_iter()
    .collect()
}

/// Top-1 accuracy in percent over `refs`.
pub fn accuracy_on(
    arch: &Architecture,
    params: &ParamVector,
    stream: &TaskStream,
    refs: &[SampleRef],
    exec: Execution,
) -> Result<f64> {
    if refs.is_empty() {
        return Ok(0.0);
    }
    let correct: usize = over_logits(arch, params, stream, refs, exec, |z, y| count_correct(z.view(), y))?
        .into_iter()
        .sum();
    Ok(100.0 * correct as f64 / refs.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Accuracy on each task's test set `0..=upto_task`, percent.
    pub per_task: Vec<f64>,
    pub mean: f64,
    /// Whole-test-set accuracy for general incremental protocols.
    pub pooled: Option<f64>,
}

impl Evaluation {
    /// Headline number: pooled accuracy when the protocol defines one,
    /// else the mean over tasks.
    pub fn headline(&self) -> f64 {
        self.pooled.unwrap_or(self.mean)
    }
}

pub fn evaluate(model: &Network, stream: &TaskStream, upto_task: usize, exec: Execution) -> Result<Evaluation> {
    evaluate_params(model.architecture(), model.params(), stream, upto_task, exec)
}

pub fn evaluate_params(
    arch: &Architecture,
    params: &ParamVector,
    stream: &TaskStream,
    upto_task: usize,
    exec: Execution,
) -> Result<Evaluation> {
    let upto = upto_task.min(stream.num_tasks().saturating_sub(1));
    let per_task = (0..=upto)
        .map(|t| accuracy_on(arch, params, stream, &stream.tasks[t].test, exec))
        .collect::<Result<Vec<_>>>()?;
    let mean = per_task.iter().sum::<f64>() / per_task.len() as f64;
    let pooled = match &stream.pooled_test {
        Some(refs) => Some(accuracy_on(arch, params, stream, refs, exec)?),
        None => None,
    };
    Ok(Evaluation { per_task, mean, pooled })
}

/// `entries[i][j]`: accuracy on task `j` after training through task `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyMatrix {
    pub n_tasks: usize,
    pub entries: Vec<Vec<f64>>,
}

impl AccuracyMatrix {
    /// Builds the matrix from per-boundary evaluation rows; row `i` must
    /// hold at least `i + 1` entries.
    pub fn from_rows(n_tasks: usize, rows: &[Option<Vec<f64>>]) -> Result<Self> {
        let mut entries = Vec::with_capacity(n_tasks);
        for i in 0..n_tasks {
            match rows.get(i) {
                Some(Some(r)) if r.len() > i => entries.push(r.clone()),
                _ => return Err(Error::MissingSnapshot(i)),
            }
        }
        Ok(Self { n_tasks, entries })
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.entries.get(i).and_then(|r| r.get(j)).copied()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_tasks).map(|i| self.entries[i][i]).collect()
    }

    /// Mean of the final row.
    pub fn final_mean(&self) -> f64 {
        let last = &self.entries[self.n_tasks - 1];
        last.iter().sum::<f64>() / last.len() as f64
    }
}

/// Average softmax mass each task's class group receives over the test
/// set, normalised to sum to one.
pub fn task_probabilities(model: &Network, stream: &TaskStream, exec: Execution) -> Result<Vec<f64>> {
    let groups: Vec<Vec<usize>> = stream.tasks.iter().map(|t| t.class_ids.clone()).collect();
    let refs: Vec<SampleRef> = match &stream.pooled_test {
        Some(p) => p.clone(),
        None => stream.tasks.iter().flat_map(|t| t.test.iter().copied()).collect(),
    };
    if refs.is_empty() {
        return Err(Error::InvalidConfig("no test samples".into()));
    }
    let partials = over_logits(model.architecture(), model.params(), stream, &refs, exec, |z, _| {
        let p = softmax_rows(z.view());
        groups
            .iter()
            .map(|g| p.rows().into_iter().map(|row| g.iter().map(|&c| row[c]).sum::<f64>()).sum::<f64>())
            .collect::<Vec<f64>>()
    })?;
    let mut sums = vec![0.0; groups.len()];
    for part in partials {
        for (s, v) in sums.iter_mut().zip(part) {
            *s += v;
        }
    }
    let avg: Vec<f64> = sums.iter().map(|s| s / refs.len() as f64).collect();
    let total: f64 = avg.iter().sum();
    Ok(avg.iter().map(|a| a / total).collect())
}
