use ndarray::{concatenate, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};

/// Row-aligned inputs and integer labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub inputs: Array2<f64>,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn new(inputs: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        ensure_dim("batch labels", inputs.nrows(), labels.len())?;
        Ok(Self { inputs, labels })
    }

    pub fn empty(input_dim: usize) -> Self {
        Self {
            inputs: Array2::zeros((0, input_dim)),
            labels: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn check_labels(&self, classes: usize) -> Result<()> {
        match self.labels.iter().find(|&&l| l >= classes) {
            Some(&label) => Err(Error::LabelOutOfRange { label, classes }),
            None => Ok(()),
        }
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &Batch) -> Result<Batch> {
        ensure_dim("batch concat", self.input_dim(), other.input_dim())?;
        let inputs = concatenate(Axis(0), &[self.inputs.view(), other.inputs.view()])
            .expect("column counts checked");
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Ok(Batch { inputs, labels })
    }

    pub fn row(&self, i: usize) -> (ndarray::ArrayView1<'_, f64>, usize) {
        (self.inputs.row(i), self.labels[i])
    }
}
