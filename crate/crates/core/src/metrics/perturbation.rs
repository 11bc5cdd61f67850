use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::count_correct;
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::nn::{cross_entropy_loss, forward, Batch, Network, ParamVector};
use crate::seeding;

pub const DEFAULT_SIGMAS: [f64; 7] = [0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    /// Noise standard deviation is `sigma` for every parameter.
    #[default]
    Absolute,
    /// Per layer, `sigma` times the root-mean-square of that layer's
    /// parameters.
    Relative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationPoint {
    pub sigma: f64,
    pub loss: f64,
    /// Percent.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationCurve {
    pub mode: NoiseMode,
    pub draws: usize,
    pub points: Vec<PerturbationPoint>,
}

fn loss_and_accuracy(net: &Network, params: &ParamVector, data: &Batch) -> Result<(f64, f64)> {
    let z = forward(net.architecture(), params, data.inputs.view())?;
    let (loss, _) = cross_entropy_loss(z.view(), &data.labels)?;
    let acc = 100.0 * count_correct(z.view(), &data.labels) as f64 / data.len() as f64;
    Ok((loss, acc))
}

fn perturbed(base: &ParamVector, sigma: f64, mode: NoiseMode, seed: u64) -> ParamVector {
    let mut p = base.clone();
    let mut rng = seeding::rng(seed, &[]);
    for l in 0..base.layout().layers().len() {
        let range = base.layer_range(l);
        let scale = match mode {
            NoiseMode::Absolute => sigma,
            NoiseMode::Relative => {
                let v = &base.values()[range.clone()];
                sigma * (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
            }
        };
        if scale == 0.0 {
            continue;
        }
        let normal = Normal::new(0.0, scale).expect("finite scale");
        for x in &mut p.values_mut()[range] {
            *x += normal.sample(&mut rng);
        }
    }
    p
}

/// Mean CE loss and accuracy on `data` after adding independent Gaussian
/// noise to every parameter, averaged over `draws` draws per sigma. The
/// model itself is never modified; each draw works on a copy.
pub fn perturbation_curve(
    model: &Network,
    data: &Batch,
    sigmas: &[f64],
    draws: usize,
    mode: NoiseMode,
    seed: u64,
    exec: Execution,
) -> Result<PerturbationCurve> {
    if data.is_empty() || draws == 0 {
        return Err(Error::InvalidConfig("perturbation needs data and at least one draw".into()));
    }
    if sigmas.first() != Some(&0.0) || sigmas.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidConfig("sigmas must ascend from 0".into()));
    }
    let base = model.params();
    let points = sigmas
        .iter()
        .enumerate()
        .map(|(si, &sigma)| {
            if sigma == 0.0 {
                let (loss, accuracy) = loss_and_accuracy(model, base, data)?;
                return Ok(PerturbationPoint { sigma, loss, accuracy });
            }
            let results = map_indexed(exec, draws, |d| {
                let p = perturbed(base, sigma, mode, seeding::derive(seed, &[si as u64, d as u64]));
                loss_and_accuracy(model, &p, data)
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
            let n = results.len() as f64;
            Ok(PerturbationPoint {
                sigma,
                loss: results.iter().map(|r| r.0).sum::<f64>() / n,
                accuracy: results.iter().map(|r| r.1).sum::<f64>() / n,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PerturbationCurve { mode, draws, points })
}
