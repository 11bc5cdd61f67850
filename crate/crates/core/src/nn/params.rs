use ndarray::{ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding;

/// Fully connected topology: `input_dim -> hidden... -> output_dim`, ReLU on
/// hidden layers and identity on the output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
}

impl Architecture {
    pub fn new(input_dim: usize, hidden: Vec<usize>, output_dim: usize) -> Result<Self> {
        let arch = Self {
            input_dim,
            hidden,
            output_dim,
        };
        arch.validate()?;
        Ok(arch)
    }

    /// The 784-100-100-C MLP used on every MNIST protocol.
    pub fn mnist_mlp(output_dim: usize) -> Self {
        Self {
            input_dim: 784,
            hidden: vec![100, 100],
            output_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "architecture has a zero-width layer: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn layout(&self) -> Layout {
        let dims: Vec<usize> = std::iter::once(self.input_dim)
            .chain(self.hidden.iter().copied())
            .chain(std::iter::once(self.output_dim))
            .collect();
        let n = dims.len() - 1;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| LayerShape {
                name: if i + 1 == n {
                    "output".to_string()
                } else {
                    format!("hidden{}", i + 1)
                },
                fan_in: w[0],
                fan_out: w[1],
            })
            .collect();
        Layout::new(layers)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub name: String,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl LayerShape {
    pub fn len(&self) -> usize {
        self.fan_in * self.fan_out + self.fan_out
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Canonical ordering of layers inside a [`ParamVector`]. Each layer stores
/// its `[fan_in, fan_out]` weight matrix row-major, followed by its bias.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    layers: Vec<LayerShape>,
}

impl Layout {
    pub fn new(layers: Vec<LayerShape>) -> Self {
        Self { layers }
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(LayerShape::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Offset of layer `l`'s weights; its bias starts `fan_in * fan_out` later.
    pub fn offset(&self, l: usize) -> usize {
        self.layers[..l].iter().map(LayerShape::len).sum()
    }
}

/// Flat vector of every trainable weight and bias of one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: Layout,
}

impl ParamVector {
    pub fn zeros(layout: Layout) -> Self {
        Self {
            values: vec![0.0; layout.len()],
            layout,
        }
    }

    pub fn from_values(layout: Layout, values: Vec<f64>) -> Result<Self> {
        crate::error::ensure_dim("parameter vector", layout.len(), values.len())?;
        Ok(Self { values, layout })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn ensure_same_layout(&self, other: &ParamVector) -> Result<()> {
        if self.layout == other.layout {
            Ok(())
        } else {
            Err(Error::LayoutMismatch)
        }
    }

    pub fn weights(&self, l: usize) -> ArrayView2<'_, f64> {
        let shape = &self.layout.layers[l];
        let start = self.layout.offset(l);
        let end = start + shape.fan_in * shape.fan_out;
        ArrayView2::from_shape((shape.fan_in, shape.fan_out), &self.values[start..end])
            .expect("layout offsets are consistent")
    }

    pub fn bias(&self, l: usize) -> ArrayView1<'_, f64> {
        let shape = &self.layout.layers[l];
        let start = self.layout.offset(l) + shape.fan_in * shape.fan_out;
        ArrayView1::from(&self.values[start..start + shape.fan_out])
    }

    pub fn layer_mut(&mut self, l: usize) -> (ArrayViewMut2<'_, f64>, ArrayViewMut1<'_, f64>) {
        let shape = self.layout.layers[l].clone();
        let start = self.layout.offset(l);
        let n_w = shape.fan_in * shape.fan_out;
        let (w, b) = self.values[start..start + shape.len()].split_at_mut(n_w);
        (
            ArrayViewMut2::from_shape((shape.fan_in, shape.fan_out), w)
                .expect("layout offsets are consistent"),
            ArrayViewMut1::from(b),
        )
    }

    /// Range of flat indices holding layer `l` (weights then bias).
    pub fn layer_range(&self, l: usize) -> std::ops::Range<usize> {
        let start = self.layout.offset(l);
        start..start + self.layout.layers[l].len()
    }

    /// In-place `self -= lr * grad`.
    pub fn sgd_update(&mut self, grad: &ParamVector, lr: f64) -> Result<()> {
        self.ensure_same_layout(grad)?;
        for (p, g) in self.values.iter_mut().zip(&grad.values) {
            *p -= lr * g;
        }
        Ok(())
    }

    /// In-place `self = alpha * self + (1 - alpha) * target`.
    pub fn ema_toward(&mut self, target: &ParamVector, alpha: f64) -> Result<()> {
        self.ensure_same_layout(target)?;
        let beta = 1.0 - alpha;
        for (p, t) in self.values.iter_mut().zip(&target.values) {
            *p = alpha * *p + beta * t;
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &ParamVector) -> Result<f64> {
        self.ensure_same_layout(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

/// Functional SGD step: `params - lr * grad`.
pub fn sgd_step(params: &ParamVector, grad: &ParamVector, lr: f64) -> Result<ParamVector> {
    let mut next = params.clone();
    next.sgd_update(grad, lr)?;
    Ok(next)
}

/// Fan-in scaled uniform initialisation: weights ~ U(-1/sqrt(fan_in),
/// 1/sqrt(fan_in)), biases zero.
pub fn init_params(seed: u64, arch: &Architecture) -> Result<ParamVector> {
    arch.validate()?;
    let layout = arch.layout();
    let mut params = ParamVector::zeros(layout.clone());
    let mut rng = seeding::rng(seed, &[seeding::tag("init")]);
    for (l, shape) in layout.layers().iter().enumerate() {
        let bound = 1.0 / (shape.fan_in as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let (mut w, _) = params.layer_mut(l);
        w.iter_mut().for_each(|x| *x = dist.sample(&mut rng));
    }
    Ok(params)
}
