use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::loss::{cross_entropy_loss, mse_loss};
use super::params::{init_params, Architecture, ParamVector};
use super::Batch;
use crate::error::{ensure_dim, Error, Result};

/// A fixed-topology MLP and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    arch: Architecture,
    params: ParamVector,
}

impl Network {
    pub fn new(arch: Architecture, params: ParamVector) -> Result<Self> {
        arch.validate()?;
        if arch.layout() != *params.layout() {
            return Err(Error::LayoutMismatch);
        }
        Ok(Self { arch, params })
    }

    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        let params = init_params(seed, &arch)?;
        Ok(Self { arch, params })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamVector {
        &mut self.params
    }

    pub fn into_params(self) -> ParamVector {
        self.params
    }

    pub fn forward(&self, inputs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        forward(&self.arch, &self.params, inputs)
    }
}

/// Raw logits of `params` interpreted under `arch`.
pub fn forward(arch: &Architecture, params: &ParamVector, inputs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    ensure_dim("forward input columns", arch.input_dim, inputs.ncols())?;
    if *params.layout() != arch.layout() {
        return Err(Error::LayoutMismatch);
    }
    let n_layers = params.layout().layers().len();
    let mut act = affine(inputs, params, 0);
    for l in 1..n_layers {
        act.mapv_inplace(relu);
        act = affine(act.view(), params, l);
    }
    Ok(act)
}

fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

fn affine(x: ArrayView2<'_, f64>, params: &ParamVector, l: usize) -> Array2<f64> {
    let mut z = x.dot(&params.weights(l));
    z += &params.bias(l);
    z
}

/// Consistency term inputs: `targets` holds one row per `true` entry of
/// `mask`, in mask order.
#[derive(Debug, Clone, Copy)]
pub struct Consistency<'a> {
    pub targets: ArrayView2<'a, f64>,
    pub mask: &'a [bool],
}

/// Decomposition of the composite training loss
/// `total = ce_term + lambda * mse_term`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    pub ce_term: f64,
    pub mse_term: f64,
    pub lambda: f64,
}

/// Loss and exact parameter gradient of
/// `CE(softmax(f(X)), Y) + lambda * MSE(f(X_masked), targets)`.
///
/// CE averages over every row of the batch; MSE averages over
/// masked rows times classes. With `lambda == 0` the consistency gradient is
/// skipped entirely, so the result is bit-identical to the CE-only gradient.
pub fn backward(
    net: &Network,
    batch: &Batch,
    consistency: Option<Consistency<'_>>,
    lambda: f64,
) -> Result<(LossReport, ParamVector)> {
    let arch = &net.arch;
    let params = &net.params;
    ensure_dim("backward input columns", arch.input_dim, batch.input_dim())?;
    batch.check_labels(arch.output_dim)?;

    // forward with saved activations: acts[l] is the input to layer l
    let n_layers = params.layout().layers().len();
    let mut acts: Vec<Array2<f64>> = Vec::with_capacity(n_layers);
    let mut z = affine(batch.inputs.view(), params, 0);
    for l in 1..n_layers {
        let a = z.mapv(relu);
        z = affine(a.view(), params, l);
        acts.push(a);
    }
    let logits = z;

    let (ce_term, mut dz) = cross_entropy_loss(logits.view(), &batch.labels)?;
    let mut mse_term = 0.0;
    if let Some(c) = consistency {
        ensure_dim("memory mask", batch.len(), c.mask.len())?;
        let rows: Vec<usize> = c
            .mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect();
        if rows.len() != c.targets.nrows() || c.targets.ncols() != arch.output_dim {
            return Err(Error::MaskMismatch(format!(
                "{} masked rows, targets {}x{}",
                rows.len(),
                c.targets.nrows(),
                c.targets.ncols()
            )));
        }
        let pred = logits.select(Axis(0), &rows);
        let (mse, g) = mse_loss(pred.view(), c.targets)?;
        mse_term = mse;
        if lambda != 0.0 {
            for (k, &i) in rows.iter().enumerate() {
                let mut row = dz.row_mut(i);
                row.scaled_add(lambda, &g.row(k));
            }
        }
    }

    let mut grad = ParamVector::zeros(params.layout().clone());
    for l in (0..n_layers).rev() {
        let input = if l == 0 {
            batch.inputs.view()
        } else {
            acts[l - 1].view()
        };
        {
            let (mut gw, mut gb) = grad.layer_mut(l);
            gw.assign(&input.t().dot(&dz));
            gb.assign(&dz.sum_axis(Axis(0)));
        }
        if l > 0 {
            let mut da = dz.dot(&params.weights(l).t());
            // ReLU mask: the activation is positive exactly where the pre-activation was
            ndarray::Zip::from(&mut da)
                .and(&acts[l - 1])
                .for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0
                    }
                });
            dz = da;
        }
    }

    let report = LossReport {
        total: ce_term + lambda * mse_term,
        ce_term,
        mse_term,
        lambda,
    };
    Ok((report, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::Layout;
    use ndarray::{arr2, Array2};
    use rand::{Rng, SeedableRng};

    fn tiny() -> Architecture {
        Architecture::new(8, vec![4, 4], 3).unwrap()
    }

    fn random_batch(rng: &mut impl Rng, n: usize, dim: usize, classes: usize) -> Batch {
        let x = Array2::from_shape_fn((n, dim), |_| rng.random_range(-1.0..1.0));
        let y = (0..n).map(|_| rng.random_range(0..classes)).collect();
        Batch::new(x, y).unwrap()
    }

    /// Straight-line loop oracle for the forward pass.
    fn loop_forward(p: &ParamVector, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        let n = p.layout().layers().len();
        for l in 0..n {
            let w = p.weights(l);
            let b = p.bias(l);
            let mut out = vec![0.0; w.ncols()];
            for j in 0..w.ncols() {
                let mut s = b[j];
                for i in 0..w.nrows() {
                    s += a[i] * w[[i, j]];
                }
                out[j] = if l + 1 < n { s.max(0.0) } else { s };
            }
            a = out;
        }
        a
    }

    #[test]
    fn zero_params_give_zero_logits() {
        let arch = tiny();
        let net = Network::new(arch.clone(), ParamVector::zeros(arch.layout())).unwrap();
        let x = Array2::from_elem((5, 8), 0.7);
        let z = net.forward(x.view()).unwrap();
        assert_eq!(z.dim(), (5, 3));
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_probe_passes_through_relu() {
        let arch = Architecture::new(1, vec![1], 1).unwrap();
        let layout: Layout = arch.layout();
        // w1 = 1, b1 = 0, w2 = 1, b2 = 0
        let p = ParamVector::from_values(layout, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let net = Network::new(arch, p).unwrap();
        let z = net.forward(arr2(&[[0.37]]).view()).unwrap();
        assert_eq!(z[[0, 0]], 0.37);
        let z = net.forward(arr2(&[[-0.37]]).view()).unwrap();
        assert_eq!(z[[0, 0]], 0.0);
    }

    #[test]
    fn forward_matches_loop_oracle() {
        let arch = Architecture::new(20, vec![7, 5], 4).unwrap();
        let net = Network::init(arch, 42).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let b = random_batch(&mut rng, 6, 20, 4);
        let z = net.forward(b.inputs.view()).unwrap();
        for i in 0..6 {
            let want = loop_forward(net.params(), b.inputs.row(i).as_slice().unwrap());
            for j in 0..4 {
                assert!((z[[i, j]] - want[j]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let net = Network::init(tiny(), 0).unwrap();
        assert!(net.forward(Array2::zeros((2, 7)).view()).is_err());
    }

    #[test]
    fn lambda_zero_equals_ce_only() {
        let net = Network::init(tiny(), 3).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let b = random_batch(&mut rng, 6, 8, 3);
        let mask = [false, false, true, true, false, true];
        let targets = Array2::from_shape_fn((3, 3), |(i, j)| (i + j) as f64);
        let c = Consistency {
            targets: targets.view(),
            mask: &mask,
        };
        let (r0, g0) = backward(&net, &b, None, 0.0).unwrap();
        let (r1, g1) = backward(&net, &b, Some(c), 0.0).unwrap();
        assert_eq!(g0.values(), g1.values());
        assert_eq!(r0.total, r1.total);
        assert!(r1.mse_term > 0.0);
    }

    #[test]
    fn self_consistency_has_zero_mse() {
        let net = Network::init(tiny(), 3).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let b = random_batch(&mut rng, 4, 8, 3);
        let mask = [true, false, true, false];
        let logits = net.forward(b.inputs.view()).unwrap();
        let targets = logits.select(Axis(0), &[0, 2]);
        let c = Consistency {
            targets: targets.view(),
            mask: &mask,
        };
        let (r, g) = backward(&net, &b, Some(c), 2.0).unwrap();
        let (_, g_ce) = backward(&net, &b, None, 0.0).unwrap();
        assert_eq!(r.mse_term, 0.0);
        assert_eq!(g.values(), g_ce.values());
    }

    #[test]
    fn mask_target_mismatch_is_error() {
        let net = Network::init(tiny(), 3).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let b = random_batch(&mut rng, 4, 8, 3);
        let targets = Array2::zeros((1, 3));
        let mask = [true, true, false, false];
        let c = Consistency {
            targets: targets.view(),
            mask: &mask,
        };
        assert!(matches!(backward(&net, &b, Some(c), 1.0), Err(Error::MaskMismatch(_))));
        let short = [true];
        let c = Consistency {
            targets: targets.view(),
            mask: &short,
        };
        assert!(backward(&net, &b, Some(c), 1.0).is_err());
    }

    #[test]
    fn report_decomposes() {
        let net = Network::init(tiny(), 8).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let b = random_batch(&mut rng, 5, 8, 3);
        let mask = [false, true, true, false, true];
        let targets = Array2::from_shape_fn((3, 3), |(i, j)| 0.1 * (i as f64) - 0.2 * j as f64);
        let c = Consistency {
            targets: targets.view(),
            mask: &mask,
        };
        let (r, _) = backward(&net, &b, Some(c), 1.7).unwrap();
        assert!((r.total - (r.ce_term + 1.7 * r.mse_term)).abs() <= 1e-9 * r.total.abs());
    }
}
