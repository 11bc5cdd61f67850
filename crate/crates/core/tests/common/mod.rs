//! Property checks shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use std::sync::Arc;

use clser::nn::{backward, softmax, Architecture, Batch, Consistency, Network, ParamVector};
use clser::replay::ReplayBuffer;
use clser::seeding;
use clser::semantic::SemanticMemory;
use clser::streams::{allocate, build_gcil, phase_weights, GcilDistribution, GcilSpec, MnistData};
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub fn normal_vec(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
        .collect()
}

pub struct GradientReport {
    pub max_rel_error: f64,
    pub networks: usize,
    pub coordinates: usize,
}

fn pre_activations_clear(arch: &Architecture, params: &ParamVector, x: &Array2<f64>, margin: f64) -> bool {
    let mut a = x.clone();
    let n = arch.layout().layers().len();
    for l in 0..n - 1 {
        let z = a.dot(&params.weights(l)) + &params.bias(l);
        if z.iter().any(|v| v.abs() < margin) {
            return false;
        }
        a = z.mapv(|v| v.max(0.0));
    }
    true
}

/// Central-difference check of the combined CE + lambda * MSE gradient on
/// random 8-4-4-3 networks.
pub fn gradient_suite(n_networks: usize) -> GradientReport {
    let arch = Architecture::new(8, vec![4, 4], 3).unwrap();
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut coords = 0;
    let mut built = 0;
    let mut attempt = 0u64;
    while built < n_networks {
        attempt += 1;
        let mut rng = seeding::rng(0x6ad, &[attempt]);
        let layout = arch.layout();
        let params = ParamVector::from_values(layout.clone(), normal_vec(&mut rng, layout.len(), 0.7)).unwrap();
        let rows = 6;
        let x = Array2::from_shape_vec((rows, 8), normal_vec(&mut rng, rows * 8, 1.0)).unwrap();
        // resample when a ReLU kink sits within reach of the finite difference
        if !pre_activations_clear(&arch, &params, &x, 1e-3) {
            continue;
        }
        built += 1;
        let labels: Vec<usize> = (0..rows).map(|_| rng.random_range(0..3)).collect();
        let mut mask: Vec<bool> = (0..rows).map(|_| rng.random_bool(0.5)).collect();
        mask[rows - 1] = true;
        let m = mask.iter().filter(|&&b| b).count();
        let targets = Array2::from_shape_vec((m, 3), normal_vec(&mut rng, m * 3, 2.0)).unwrap();
        let lambda = rng.random_range(0.1..2.0);
        let batch = Batch::new(x, labels).unwrap();
        let loss = |p: &ParamVector| {
            let net = Network::new(arch.clone(), p.clone()).unwrap();
            let c = Consistency { targets: targets.view(), mask: &mask };
            backward(&net, &batch, Some(c), lambda).unwrap()
        };
        let (_, grad) = loss(&params);
        for i in 0..params.len() {
            let mut plus = params.clone();
            plus.values_mut()[i] += h;
            let mut minus = params.clone();
            minus.values_mut()[i] -= h;
            let fd = (loss(&plus).0.total - loss(&minus).0.total) / (2.0 * h);
            let g = grad.values()[i];
            let rel = (fd - g).abs() / fd.abs().max(g.abs()).max(1e-6);
            worst = worst.max(rel);
            coords += 1;
        }
    }
    GradientReport {
        max_rel_error: worst,
        networks: built,
        coordinates: coords,
    }
}

/// Normalisation and shift invariance of softmax on random logits; returns
/// the largest deviation seen.
pub fn softmax_properties(cases: usize) -> f64 {
    let mut rng = seeding::rng(0x50f, &[]);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let k = rng.random_range(1..20);
        let scale = [0.1, 1.0, 10.0, 300.0][rng.random_range(0..4)];
        let z = Array1::from(normal_vec(&mut rng, k, scale));
        let p = softmax(z.view());
        worst = worst.max((p.sum() - 1.0).abs());
        let shift = rng.random_range(-500.0..500.0);
        let q = softmax((&z + shift).view());
        for (a, b) in p.iter().zip(&q) {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}

pub struct ChiSquare {
    pub statistic: f64,
    pub dof: f64,
    pub p_value: f64,
}

/// Offers items `0..n` to a budget-`b` reservoir in each of `streams`
/// seeded streams and tests the final retention counts for uniformity.
pub fn reservoir_chi_square(streams: u64, n: usize, b: usize) -> ChiSquare {
    let mut counts = vec![0usize; n];
    for s in 0..streams {
        let mut buf = ReplayBuffer::new(b, 1, seeding::rng(0xbeef, &[s])).unwrap();
        for i in 0..n {
            buf.offer(Array1::from(vec![i as f64]).view(), i).unwrap();
        }
        for &l in buf.labels() {
            counts[l] += 1;
        }
    }
    let expected = streams as f64 * b as f64 / n as f64;
    let statistic: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let dof = (n - 1) as f64;
    let p_value = 1.0 - ChiSquared::new(dof).unwrap().cdf(statistic);
    ChiSquare { statistic, dof, p_value }
}

/// Random interleaving of offers and samples; checks after every operation
/// that the buffer holds exactly `min(seen, budget)` items, all of them
/// previously offered.
pub fn reservoir_size_invariant(ops: usize) -> Result<(), String> {
    let mut rng = seeding::rng(0x51e, &[]);
    let budget = 37;
    let mut buf = ReplayBuffer::new(budget, 2, seeding::rng(0x51f, &[])).unwrap();
    let mut offered = 0usize;
    for op in 0..ops {
        if rng.random_bool(0.7) {
            let x = Array1::from(vec![offered as f64, -(offered as f64)]);
            buf.offer(x.view(), offered % 10).map_err(|e| e.to_string())?;
            offered += 1;
        } else {
            let k = rng.random_range(1..=64);
            let batch = buf.sample_batch(k);
            let want = if buf.is_empty() { 0 } else { k };
            if batch.len() != want {
                return Err(format!("op {op}: sampled {} rows, wanted {want}", batch.len()));
            }
            for r in 0..batch.len() {
                let v = batch.inputs[[r, 0]];
                if v < 0.0 || v >= offered as f64 || batch.inputs[[r, 1]] != -v || batch.labels[r] != v as usize % 10 {
                    return Err(format!("op {op}: sampled a row that was never offered"));
                }
            }
        }
        if buf.len() != offered.min(budget) || buf.seen() != offered as u64 {
            return Err(format!("op {op}: len {} with {offered} offered", buf.len()));
        }
    }
    Ok(())
}

/// Largest amount by which a memory coordinate leaves the range spanned by
/// its initial value and every working value it was averaged with.
pub fn ema_convex_violation(steps: usize) -> f64 {
    let mut rng = seeding::rng(0xe3a, &[]);
    let layout = Architecture::new(5, vec![3], 2).unwrap().layout();
    let init = ParamVector::from_values(layout.clone(), normal_vec(&mut rng, layout.len(), 1.0)).unwrap();
    let mut mem = SemanticMemory::new(&init, 0.9, 0.6, seeding::rng(0xe3b, &[])).unwrap();
    let mut lo = init.values().to_vec();
    let mut hi = lo.clone();
    let mut worst = 0.0f64;
    for _ in 0..steps {
        let w = ParamVector::from_values(layout.clone(), normal_vec(&mut rng, layout.len(), 3.0)).unwrap();
        if mem.maybe_update(&w).unwrap() {
            for (i, v) in w.values().iter().enumerate() {
                lo[i] = lo[i].min(*v);
                hi[i] = hi[i].max(*v);
            }
        }
        for (i, v) in mem.params().values().iter().enumerate() {
            worst = worst.max(lo[i] - v).max(v - hi[i]);
        }
    }
    worst
}

/// With rate 1 and a fixed working model the gap to it must shrink as
/// `alpha^t`; returns the largest relative deviation from that law.
pub fn ema_geometric_error(alpha: f64, steps: i32) -> f64 {
    let mut rng = seeding::rng(0x9e0, &[]);
    let layout = Architecture::new(4, vec![3], 2).unwrap().layout();
    let init = ParamVector::from_values(layout.clone(), normal_vec(&mut rng, layout.len(), 1.0)).unwrap();
    let target = ParamVector::from_values(layout.clone(), normal_vec(&mut rng, layout.len(), 1.0)).unwrap();
    let mut mem = SemanticMemory::new(&init, alpha, 1.0, seeding::rng(0x9e1, &[])).unwrap();
    let mut worst = 0.0f64;
    for t in 1..=steps {
        assert!(mem.maybe_update(&target).unwrap());
        let decay = alpha.powi(t);
        for ((m, w), i0) in mem.params().values().iter().zip(target.values()).zip(init.values()) {
            let want = decay * (i0 - w);
            let got = m - w;
            worst = worst.max((got - want).abs() / (i0 - w).abs().max(1e-300));
        }
    }
    worst
}

/// Fired updates out of `calls` at `rate`, with the binomial mean and sd.
pub fn ema_rate(rate: f64, calls: u64, seed: u64) -> (u64, f64, f64) {
    let layout = Architecture::new(2, vec![2], 2).unwrap().layout();
    let p = ParamVector::zeros(layout);
    let mut mem = SemanticMemory::new(&p, 0.99, rate, seeding::rng(seed, &[])).unwrap();
    for _ in 0..calls {
        mem.maybe_update(&p).unwrap();
    }
    let n = calls as f64;
    (mem.updates(), n * rate, (n * rate * (1.0 - rate)).sqrt())
}

pub struct GcilSummary {
    pub phases: usize,
    pub recurring_classes: usize,
}

/// Class overlap between phases, exact per-phase sample totals and
/// non-increasing long-tail quotas.
pub fn gcil_properties(data: Arc<MnistData>) -> Result<GcilSummary, String> {
    let mut recurring = 0;
    let mut phases = 0;
    for distribution in [GcilDistribution::Uniform, GcilDistribution::Longtail] {
        for seed in 0..3 {
            let spec = GcilSpec {
                distribution,
                dataset_seed: seed,
                ..GcilSpec::default()
            };
            let stream = build_gcil(data.clone(), &spec).map_err(|e| e.to_string())?;
            let manifest = stream.manifest();
            let mut appearances = vec![0usize; stream.total_classes];
            for t in &manifest.tasks {
                phases += 1;
                if t.train_samples != spec.samples_per_phase {
                    return Err(format!("phase {} has {} samples", t.task, t.train_samples));
                }
                if t.train_label_histogram.iter().sum::<usize>() != spec.samples_per_phase {
                    return Err(format!("phase {} histogram does not sum to its budget", t.task));
                }
                let mut counts: Vec<usize> = t.class_ids.iter().map(|&c| t.train_label_histogram[c]).collect();
                counts.sort_unstable_by(|a, b| b.cmp(a));
                let quota = allocate(spec.samples_per_phase, &phase_weights(counts.len(), &spec));
                if counts != quota {
                    return Err(format!("phase {} counts {counts:?} differ from quotas {quota:?}", t.task));
                }
                if quota.windows(2).any(|w| w[0] < w[1]) {
                    return Err(format!("phase {} quotas increase along the tail", t.task));
                }
                if distribution == GcilDistribution::Longtail && quota.len() > 2 && quota[0] <= quota[quota.len() - 1] {
                    return Err(format!("phase {} long tail is flat", t.task));
                }
                for &c in &t.class_ids {
                    appearances[c] += 1;
                }
            }
            recurring += appearances.iter().filter(|&&a| a > 1).count();
        }
    }
    if recurring == 0 {
        return Err("no class recurs across phases".into());
    }
    Ok(GcilSummary {
        phases,
        recurring_classes: recurring,
    })
}

/// Real MNIST when it is available, else `None`.
pub fn real_mnist() -> Option<Arc<MnistData>> {
    clser::streams::load_mnist(clser::streams::default_data_dir()).ok().map(Arc::new)
}
