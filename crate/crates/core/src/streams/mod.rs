//! Task streams for the MNIST-family protocols.
//!
//! A [`TaskStream`] stores lightweight [`SampleRef`]s into the shared raw
//! dataset; pixels are scaled and transformed only when a batch is
//! materialised. Learners receive plain [`Batch`]es and never see task
//! identities: those exist only on the evaluation side of the stream.

mod gcil;
mod mnist;
mod protocols;
pub mod transform;

use std::sync::Arc;

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::Batch;
use crate::seeding;

pub use gcil::{allocate, build_gcil, phase_weights, GcilDistribution, GcilSpec};
pub use mnist::{
    default_data_dir, load_mnist, parse_idx_images, parse_idx_labels, MnistData, Split, IMAGE_PIXELS,
    IMAGE_SIDE,
};
pub use protocols::{
    build_mnist360, build_p_mnist, build_r_mnist, build_s_mnist, build_stream, AngleSchedule, Mnist360Options, Mnist360Rotation,
    ProtocolConfig, TestOrientation,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    SMnist,
    RMnist,
    PMnist,
    Mnist360,
    Gcil,
}

impl Protocol {
    /// General incremental protocols report one pooled test accuracy
    /// instead of a per-task mean.
    pub fn is_general(self) -> bool {
        matches!(self, Protocol::Mnist360 | Protocol::Gcil)
    }

    pub fn name(self) -> &'static str {
        match self {
            Protocol::SMnist => "s-mnist",
            Protocol::RMnist => "r-mnist",
            Protocol::PMnist => "p-mnist",
            Protocol::Mnist360 => "mnist-360",
            Protocol::Gcil => "gcil",
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "s-mnist" | "smnist" | "seq-mnist" => Ok(Protocol::SMnist),
            "r-mnist" | "rmnist" | "rot-mnist" => Ok(Protocol::RMnist),
            "p-mnist" | "pmnist" | "perm-mnist" => Ok(Protocol::PMnist),
            "mnist-360" | "mnist360" => Ok(Protocol::Mnist360),
            "gcil" | "gcil-mnist" => Ok(Protocol::Gcil),
            other => Err(crate::Error::InvalidConfig(format!("unknown protocol {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    Train,
    Test,
}

/// Per-sample view applied at materialisation time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum View {
    Identity,
    Rotate(f32),
    /// Index into [`TaskStream::permutations`].
    Permute(u16),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRef {
    pub source: Source,
    pub index: u32,
    pub view: View,
}

/// Audit description of how a task's inputs were transformed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransformDescriptor {
    None,
    Rotation { degrees: f64 },
    Permutation { index: usize },
    RotationSweep { start_degrees: f64, end_degrees: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskData {
    /// Training order. Shuffled per epoch when `shuffle` is set, otherwise
    /// emitted as stored.
    pub train: Vec<SampleRef>,
    pub test: Vec<SampleRef>,
    /// Held-out part of the training data (empty unless a validation split
    /// was requested).
    pub validation: Vec<SampleRef>,
    /// Reporting only; never handed to a learner.
    pub class_ids: Vec<usize>,
    pub transform: TransformDescriptor,
    pub shuffle: bool,
}

#[derive(Debug, Clone)]
pub struct TaskStream {
    pub protocol: Protocol,
    pub tasks: Vec<TaskData>,
    pub total_classes: usize,
    pub seed: u64,
    /// Whole-test-set evaluation for general incremental protocols.
    pub pooled_test: Option<Vec<SampleRef>>,
    pub permutations: Vec<Vec<u16>>,
    data: Arc<MnistData>,
}

impl TaskStream {
    pub(crate) fn new(
        protocol: Protocol,
        tasks: Vec<TaskData>,
        seed: u64,
        data: Arc<MnistData>,
    ) -> Self {
        Self {
            protocol,
            tasks,
            total_classes: data.num_classes(),
            seed,
            pooled_test: None,
            permutations: Vec::new(),
            data,
        }
    }

    pub fn data(&self) -> &Arc<MnistData> {
        &self.data
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn input_dim(&self) -> usize {
        IMAGE_PIXELS
    }

    /// Scaled, transformed pixels of one sample.
    pub fn pixels_into(&self, r: &SampleRef, out: &mut [f64]) {
        let split = match r.source {
            Source::Train => &self.data.train,
            Source::Test => &self.data.test,
        };
        let raw = split.image(r.index as usize);
        match r.view {
            View::Identity => {
                for (o, &p) in out.iter_mut().zip(raw) {
                    *o = p as f64 / 255.0;
                }
            }
            View::Rotate(deg) => {
                let scaled: Vec<f64> = raw.iter().map(|&p| p as f64 / 255.0).collect();
                transform::rotate_into(&scaled, deg as f64, out);
            }
            View::Permute(k) => {
                let scaled: Vec<f64> = raw.iter().map(|&p| p as f64 / 255.0).collect();
                transform::permute_into(&scaled, &self.permutations[k as usize], out);
            }
        }
    }

    pub fn label(&self, r: &SampleRef) -> usize {
        let split = match r.source {
            Source::Train => &self.data.train,
            Source::Test => &self.data.test,
        };
        split.labels[r.index as usize] as usize
    }

    pub fn materialize(&self, refs: &[SampleRef]) -> Batch {
        let mut inputs = Array2::zeros((refs.len(), IMAGE_PIXELS));
        for (mut row, r) in inputs.rows_mut().into_iter().zip(refs) {
            self.pixels_into(r, row.as_slice_mut().expect("standard layout"));
        }
        let labels = refs.iter().map(|r| self.label(r)).collect();
        Batch { inputs, labels }
    }

    /// Training order of `task` for a given epoch.
    pub fn train_order(&self, task: usize, epoch: usize) -> Vec<SampleRef> {
        let t = &self.tasks[task];
        let mut order = t.train.clone();
        if t.shuffle {
            let mut rng = seeding::rng(
                self.seed,
                &[seeding::tag("train-order"), task as u64, epoch as u64],
            );
            order.shuffle(&mut rng);
        }
        order
    }

    /// Materialised training batches of `task` for one epoch.
    pub fn train_batches(&self, task: usize, epoch: usize, batch_size: usize) -> impl Iterator<Item = Batch> + '_ {
        let order = self.train_order(task, epoch);
        let n = order.len();
        (0..n)
            .step_by(batch_size.max(1))
            .map(move |s| self.materialize(&order[s..(s + batch_size).min(n)]))
    }

    /// Every task's training samples, shuffled together. A single-task
    /// stream keeps its own training order.
    pub fn joint_order(&self, epoch: usize) -> Vec<SampleRef> {
        if self.tasks.len() == 1 {
            return self.train_order(0, epoch);
        }
        let mut all: Vec<SampleRef> = self.tasks.iter().flat_map(|t| t.train.iter().copied()).collect();
        let mut rng = seeding::rng(self.seed, &[seeding::tag("joint-order"), epoch as u64]);
        all.shuffle(&mut rng);
        all
    }

    /// Moves a seeded `fraction` of each task's training data into its
    /// validation set.
    pub fn with_validation(mut self, fraction: f64) -> Self {
        if fraction <= 0.0 {
            return self;
        }
        for (k, t) in self.tasks.iter_mut().enumerate() {
            let mut rng = seeding::rng(self.seed, &[seeding::tag("validation"), k as u64]);
            let mut idx: Vec<usize> = (0..t.train.len()).collect();
            idx.shuffle(&mut rng);
            let n_val = ((t.train.len() as f64) * fraction).round() as usize;
            let mut held: Vec<usize> = idx[..n_val].to_vec();
            held.sort_unstable();
            let mut keep = vec![true; t.train.len()];
            for &i in &held {
                keep[i] = false;
            }
            t.validation = held.iter().map(|&i| t.train[i]).collect();
            t.train = t
                .train
                .iter()
                .zip(&keep)
                .filter(|(_, &k)| k)
                .map(|(r, _)| *r)
                .collect();
        }
        self
    }

    pub fn total_train_samples(&self) -> usize {
        self.tasks.iter().map(|t| t.train.len()).sum()
    }

    pub fn manifest(&self) -> StreamManifest {
        StreamManifest {
            protocol: self.protocol,
            seed: self.seed,
            total_classes: self.total_classes,
            pooled_test_size: self.pooled_test.as_ref().map(Vec::len),
            tasks: self
                .tasks
                .iter()
                .enumerate()
                .map(|(k, t)| {
                    let mut hist = vec![0usize; self.total_classes];
                    for r in &t.train {
                        hist[self.label(r)] += 1;
                    }
                    TaskManifest {
                        task: k,
                        class_ids: t.class_ids.clone(),
                        transform: t.transform.clone(),
                        train_samples: t.train.len(),
                        validation_samples: t.validation.len(),
                        test_samples: t.test.len(),
                        train_label_histogram: hist,
                    }
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskManifest {
    pub task: usize,
    pub class_ids: Vec<usize>,
    pub transform: TransformDescriptor,
    pub train_samples: usize,
    pub validation_samples: usize,
    pub test_samples: usize,
    pub train_label_histogram: Vec<usize>,
}

/// JSON-serialisable audit record of a stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamManifest {
    pub protocol: Protocol,
    pub seed: u64,
    pub total_classes: usize,
    pub pooled_test_size: Option<usize>,
    pub tasks: Vec<TaskManifest>,
}
