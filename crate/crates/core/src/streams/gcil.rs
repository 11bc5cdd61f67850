//! Generalised class-incremental sampler: every phase draws its own class
//! subset (classes may recur), then allocates a fixed sample budget across
//! the drawn classes either evenly or along a geometric long tail.

use std::sync::Arc;

use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{MnistData, Protocol, SampleRef, Source, TaskData, TaskStream, TransformDescriptor, View};
use crate::error::{Error, Result};
use crate::seeding;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GcilDistribution {
    #[default]
    Uniform,
    Longtail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcilSpec {
    pub num_phases: usize,
    pub samples_per_phase: usize,
    pub max_classes_per_phase: usize,
    pub distribution: GcilDistribution,
    pub dataset_seed: u64,
    /// Ratio between consecutive class weights in longtail mode.
    #[serde(default = "default_decay")]
    pub longtail_decay: f64,
}

fn default_decay() -> f64 {
    0.9
}

impl Default for GcilSpec {
    fn default() -> Self {
        Self {
            num_phases: 20,
            samples_per_phase: 1000,
            max_classes_per_phase: 50,
            distribution: GcilDistribution::Uniform,
            dataset_seed: 0,
            longtail_decay: default_decay(),
        }
    }
}

/// Splits `total` across `weights.len()` ranked classes: floors of the
/// proportional shares, with the leftover units going to the highest-ranked
/// classes so the quotas stay non-increasing in rank.
pub fn allocate(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let mut q: Vec<usize> = weights
        .iter()
        .map(|w| (total as f64 * w / sum).floor() as usize)
        .collect();
    let left = total - q.iter().sum::<usize>();
    // left < q.len() because every floor loses less than one unit
    for slot in q.iter_mut().take(left) {
        *slot += 1;
    }
    q
}

/// Unnormalised class weights in rank order.
pub fn phase_weights(k: usize, spec: &GcilSpec) -> Vec<f64> {
    match spec.distribution {
        GcilDistribution::Uniform => vec![1.0; k],
        GcilDistribution::Longtail => (0..k).map(|i| spec.longtail_decay.powi(i as i32)).collect(),
    }
}

pub fn build_gcil(data: Arc<MnistData>, spec: &GcilSpec) -> Result<TaskStream> {
    if spec.num_phases == 0 || spec.samples_per_phase == 0 || spec.max_classes_per_phase == 0 {
        return Err(Error::InvalidConfig(format!("degenerate gcil spec {spec:?}")));
    }
    if !(spec.longtail_decay > 0.0 && spec.longtail_decay <= 1.0) {
        return Err(Error::InvalidConfig("longtail decay must lie in (0, 1]".into()));
    }
    let classes = data.num_classes();
    let max_k = spec.max_classes_per_phase.min(classes);
    let pools: Vec<Vec<u32>> = (0..classes).map(|c| data.train.indices_of(c)).collect();
    let test_pools: Vec<Vec<u32>> = (0..classes).map(|c| data.test.indices_of(c)).collect();
    let mut rng = seeding::rng(spec.dataset_seed, &[seeding::tag("gcil-phases")]);

    let mut tasks = Vec::with_capacity(spec.num_phases);
    for _ in 0..spec.num_phases {
        let k = rng.random_range(1..=max_k);
        let drawn: Vec<usize> = index::sample(&mut rng, classes, k).into_vec();
        let mut quota = allocate(spec.samples_per_phase, &phase_weights(k, spec));

        // redistribute any quota a class cannot fill, in rank order
        let mut deficit = 0usize;
        for (q, &c) in quota.iter_mut().zip(&drawn) {
            if *q > pools[c].len() {
                deficit += *q - pools[c].len();
                *q = pools[c].len();
            }
        }
        for (q, &c) in quota.iter_mut().zip(&drawn) {
            let room = pools[c].len() - *q;
            let give = room.min(deficit);
            *q += give;
            deficit -= give;
        }
        if deficit > 0 {
            return Err(Error::InvalidConfig(format!(
                "phase needs {} samples but its classes hold fewer",
                spec.samples_per_phase
            )));
        }

        let mut train = Vec::with_capacity(spec.samples_per_phase);
        for (&q, &c) in quota.iter().zip(&drawn) {
            for i in index::sample(&mut rng, pools[c].len(), q) {
                train.push(SampleRef {
                    source: Source::Train,
                    index: pools[c][i],
                    view: View::Identity,
                });
            }
        }
        train.shuffle(&mut rng);
        let mut class_ids = drawn.clone();
        class_ids.sort_unstable();
        let mut test: Vec<u32> = class_ids.iter().flat_map(|&c| test_pools[c].iter().copied()).collect();
        test.sort_unstable();
        tasks.push(TaskData {
            train,
            test: test
                .into_iter()
                .map(|index| SampleRef {
                    source: Source::Test,
                    index,
                    view: View::Identity,
                })
                .collect(),
            validation: Vec::new(),
            class_ids,
            transform: TransformDescriptor::None,
            shuffle: true,
        });
    }
    let pooled = (0..data.test.len() as u32)
        .map(|index| SampleRef {
            source: Source::Test,
            index,
            view: View::Identity,
        })
        .collect();
    let mut stream = TaskStream::new(Protocol::Gcil, tasks, spec.dataset_seed, data);
    stream.pooled_test = Some(pooled);
    Ok(stream)
}
