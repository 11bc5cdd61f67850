use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Zip};

use crate::error::{ensure_dim, Result};

/// Max-shifted softmax of one logit vector.
pub fn softmax(logits: ArrayView1<'_, f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let mut out = logits.mapv(|z| (z - max).exp());
    let sum = out.sum();
    out /= sum;
    out
}

/// Row-wise softmax of a logit matrix.
pub fn softmax_rows(logits: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        row.mapv_inplace(|z| (z - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

/// Numerically stable `log softmax(row)[label]`.
pub fn log_softmax_row(row: ArrayView1<'_, f64>, label: usize) -> f64 {
    let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let lse = row.iter().map(|z| (z - max).exp()).sum::<f64>().ln() + max;
    row[label] - lse
}

/// Mean negative log-likelihood over rows, with its gradient
/// `(softmax - one_hot) / rows` with respect to the logits.
pub fn cross_entropy_loss(logits: ArrayView2<'_, f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    ensure_dim("cross-entropy labels", logits.nrows(), labels.len())?;
    let n = logits.nrows();
    if n == 0 {
        return Ok((0.0, Array2::zeros(logits.raw_dim())));
    }
    let classes = logits.ncols();
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(crate::Error::LabelOutOfRange { label, classes });
    }
    let mut grad = softmax_rows(logits);
    let mut loss = 0.0;
    for (i, (&label, row)) in labels.iter().zip(logits.rows()).enumerate() {
        loss -= log_softmax_row(row, label);
        grad[[i, label]] -= 1.0;
    }
    let inv = 1.0 / n as f64;
    grad.mapv_inplace(|g| g * inv);
    Ok((loss * inv, grad))
}

/// Mean squared difference over every element, with gradient
/// `2 (pred - target) / count`.
pub fn mse_loss(pred: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>) -> Result<(f64, Array2<f64>)> {
    ensure_dim("mse rows", pred.nrows(), target.nrows())?;
    ensure_dim("mse columns", pred.ncols(), target.ncols())?;
    let count = pred.len();
    if count == 0 {
        return Ok((0.0, Array2::zeros(pred.raw_dim())));
    }
    let scale = 1.0 / count as f64;
    let mut grad = Array2::zeros(pred.raw_dim());
    let mut loss = 0.0;
    Zip::from(&mut grad).and(pred).and(target).for_each(|g, &p, &t| {
        let d = p - t;
        loss += d * d;
        *g = 2.0 * d * scale;
    });
    Ok((loss * scale, grad))
}
