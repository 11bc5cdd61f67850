use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::gcil::{build_gcil, GcilSpec};
use super::transform::random_permutation;
use super::{MnistData, Protocol, SampleRef, Source, TaskData, TaskStream, TransformDescriptor, View};
use crate::error::{Error, Result};
use crate::seeding;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AngleSchedule {
    /// The grid `k * 180 / n_tasks`, visited in a seeded random order.
    #[default]
    ShuffledGrid,
    /// The same grid in increasing order.
    EvenlySpaced,
    /// Independent uniform draws from `[0, 180)`.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TestOrientation {
    /// Test digits are evaluated upright.
    #[default]
    Canonical,
    /// Test digit `i` of `n` is rotated by `360 * i / n` degrees.
    Spread,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Mnist360Rotation {
    /// Each class keeps its own angle, advancing with every one of its
    /// samples so it sweeps a full turn over the stream; class `c` starts
    /// at `(c - 1) * class_offset_degrees`.
    #[default]
    PerClass,
    /// One angle for the whole stream, growing with every emitted sample.
    Stream,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mnist360Options {
    pub rounds: usize,
    /// Digits `0..classes` take part; pairs wrap around.
    pub classes: usize,
    pub rotation: Mnist360Rotation,
    pub class_offset_degrees: f64,
    pub test_orientation: TestOrientation,
}

impl Default for Mnist360Options {
    fn default() -> Self {
        Self {
            rounds: 3,
            classes: 9,
            rotation: Mnist360Rotation::PerClass,
            class_offset_degrees: 60.0,
            test_orientation: TestOrientation::Canonical,
        }
    }
}

/// Everything needed to rebuild a stream besides the data and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub protocol: Protocol,
    /// Task count for the domain-incremental protocols.
    #[serde(default = "default_domain_tasks")]
    pub domain_tasks: usize,
    #[serde(default)]
    pub angles: AngleSchedule,
    #[serde(default)]
    pub mnist360: Mnist360Options,
    #[serde(default)]
    pub gcil: GcilSpec,
}

fn default_domain_tasks() -> usize {
    20
}

impl ProtocolConfig {
    pub fn new(protocol: Protocol) -> Self {
        Self {
            protocol,
            domain_tasks: default_domain_tasks(),
            angles: AngleSchedule::default(),
            mnist360: Mnist360Options::default(),
            gcil: GcilSpec::default(),
        }
    }
}

pub fn build_stream(data: Arc<MnistData>, config: &ProtocolConfig, seed: u64) -> Result<TaskStream> {
    match config.protocol {
        Protocol::SMnist => Ok(build_s_mnist(data, seed)),
        Protocol::RMnist => build_r_mnist(data, seed, config.domain_tasks, config.angles),
        Protocol::PMnist => build_p_mnist(data, seed, config.domain_tasks),
        Protocol::Mnist360 => build_mnist360(data, seed, config.mnist360),
        Protocol::Gcil => {
            let mut spec = config.gcil.clone();
            spec.dataset_seed = seeding::derive(seed, &[seeding::tag("gcil"), spec.dataset_seed]);
            build_gcil(data, &spec)
        }
    }
}

fn refs(source: Source, indices: impl IntoIterator<Item = u32>, view: View) -> Vec<SampleRef> {
    indices
        .into_iter()
        .map(|index| SampleRef { source, index, view })
        .collect()
}

/// Five class-incremental tasks {0,1}, {2,3}, ..., {8,9} in fixed order.
pub fn build_s_mnist(data: Arc<MnistData>, seed: u64) -> TaskStream {
    let tasks = (0..5)
        .map(|k| {
            let classes = vec![2 * k, 2 * k + 1];
            let select = |split: &super::Split| {
                let mut idx: Vec<u32> = classes.iter().flat_map(|&c| split.indices_of(c)).collect();
                idx.sort_unstable();
                idx
            };
            TaskData {
                train: refs(Source::Train, select(&data.train), View::Identity),
                test: refs(Source::Test, select(&data.test), View::Identity),
                validation: Vec::new(),
                class_ids: classes,
                transform: TransformDescriptor::None,
                shuffle: true,
            }
        })
        .collect();
    TaskStream::new(Protocol::SMnist, tasks, seed, data)
}

fn full_task(data: &MnistData, view: View, transform: TransformDescriptor) -> TaskData {
    TaskData {
        train: refs(Source::Train, 0..data.train.len() as u32, view),
        test: refs(Source::Test, 0..data.test.len() as u32, view),
        validation: Vec::new(),
        class_ids: (0..data.num_classes()).collect(),
        transform,
        shuffle: true,
    }
}

/// Domain-incremental rotations: every task is all of MNIST under one fixed
/// angle in `[0, 180)`.
pub fn build_r_mnist(data: Arc<MnistData>, seed: u64, n_tasks: usize, schedule: AngleSchedule) -> Result<TaskStream> {
    if n_tasks == 0 {
        return Err(Error::InvalidConfig("r-mnist needs at least one task".into()));
    }
    let mut rng = seeding::rng(seed, &[seeding::tag("r-mnist-angles")]);
    let grid: Vec<f64> = (0..n_tasks).map(|k| 180.0 * k as f64 / n_tasks as f64).collect();
    let angles: Vec<f64> = match schedule {
        AngleSchedule::EvenlySpaced => grid,
        AngleSchedule::ShuffledGrid => {
            let mut g = grid;
            g.shuffle(&mut rng);
            g
        }
        AngleSchedule::Random => (0..n_tasks).map(|_| rng.random_range(0.0..180.0)).collect(),
    };
    let tasks = angles
        .into_iter()
        .map(|angle| {
            let angle = angle as f32;
            full_task(
                &data,
                View::Rotate(angle),
                TransformDescriptor::Rotation { degrees: angle as f64 },
            )
        })
        .collect();
    Ok(TaskStream::new(Protocol::RMnist, tasks, seed, data))
}

/// Domain-incremental permutations: task 0 is the identity, each later task
/// a fresh seeded pixel permutation.
pub fn build_p_mnist(data: Arc<MnistData>, seed: u64, n_tasks: usize) -> Result<TaskStream> {
    if n_tasks == 0 {
        return Err(Error::InvalidConfig("p-mnist needs at least one task".into()));
    }
    let mut rng = seeding::rng(seed, &[seeding::tag("p-mnist-permutations")]);
    let mut permutations = vec![(0..super::IMAGE_PIXELS as u16).collect::<Vec<u16>>()];
    for _ in 1..n_tasks {
        permutations.push(random_permutation(&mut rng));
    }
    let tasks = (0..n_tasks)
        .map(|k| full_task(&data, View::Permute(k as u16), TransformDescriptor::Permutation { index: k }))
        .collect();
    let mut stream = TaskStream::new(Protocol::PMnist, tasks, seed, data);
    stream.permutations = permutations;
    Ok(stream)
}

/// Digit pairs (0,1), (1,2), ..., (k-1,0) presented as consecutive
/// segments and cycled `rounds` times, every sample rotated.
///
/// Each class's training samples are shuffled and split into disjoint
/// per-round shares. A class spends the first half of its share in the
/// pair where it comes second and the other half in the pair where it
/// comes first, so every class contributes equally. Samples of the two
/// classes alternate inside a segment.
pub fn build_mnist360(data: Arc<MnistData>, seed: u64, opts: Mnist360Options) -> Result<TaskStream> {
    let k = opts.classes;
    if opts.rounds == 0 || k < 2 || k > data.num_classes() {
        return Err(Error::InvalidConfig(format!("invalid mnist-360 options {opts:?}")));
    }
    let rounds = opts.rounds;
    // shares[class][round]
    let shares: Vec<Vec<Vec<u32>>> = (0..k)
        .map(|c| {
            let mut idx = data.train.indices_of(c);
            let mut rng = seeding::rng(seed, &[seeding::tag("mnist-360-class"), c as u64]);
            idx.shuffle(&mut rng);
            let per = idx.len() / rounds;
            (0..rounds).map(|r| idx[r * per..(r + 1) * per].to_vec()).collect()
        })
        .collect();

    // (first class, interleaved sample indices) per segment
    let mut segments: Vec<(usize, Vec<u32>)> = Vec::with_capacity(k * rounds);
    for r in 0..rounds {
        for a in 0..k {
            let b = (a + 1) % k;
            let sa = &shares[a][r];
            let sb = &shares[b][r];
            let (xa, xb) = (&sa[sa.len() / 2..], &sb[..sb.len() / 2]);
            let n = xa.len().min(xb.len());
            segments.push((a, (0..n).flat_map(|i| [xa[i], xb[i]]).collect()));
        }
    }

    let label = |i: u32| data.train.labels[i as usize] as usize;
    let mut per_class_total = vec![0usize; k];
    for (_, seg) in &segments {
        for &i in seg {
            per_class_total[label(i)] += 1;
        }
    }
    let round_len = segments.len() / rounds;
    let round_samples: Vec<usize> = segments
        .chunks(round_len)
        .map(|c| c.iter().map(|(_, s)| s.len()).sum())
        .collect();
    let mut per_class_seen = vec![0usize; k];
    let mut emitted_in_round = 0usize;

    let mut tasks = Vec::with_capacity(segments.len());
    for (pos, (a, seg)) in segments.into_iter().enumerate() {
        let r = pos / round_len;
        if pos % round_len == 0 {
            emitted_in_round = 0;
        }
        let mut train = Vec::with_capacity(seg.len());
        for index in seg {
            let c = label(index);
            let angle = match opts.rotation {
                Mnist360Rotation::PerClass => {
                    (c as f64 - 1.0) * opts.class_offset_degrees
                        + 360.0 * per_class_seen[c] as f64 / per_class_total[c] as f64
                }
                Mnist360Rotation::Stream => {
                    let span = 360.0 / rounds as f64;
                    span * (r as f64 + emitted_in_round as f64 / round_samples[r] as f64)
                }
            };
            per_class_seen[c] += 1;
            emitted_in_round += 1;
            train.push(SampleRef {
                source: Source::Train,
                index,
                view: View::Rotate(angle as f32),
            });
        }
        let degrees = |r: &SampleRef| match r.view {
            View::Rotate(d) => d as f64,
            _ => 0.0,
        };
        let start = train.iter().map(degrees).fold(f64::INFINITY, f64::min);
        let end = train.iter().map(degrees).fold(f64::NEG_INFINITY, f64::max);
        let b = (a + 1) % k;
        let mut test_idx: Vec<u32> = [a, b].iter().flat_map(|&c| data.test.indices_of(c)).collect();
        test_idx.sort_unstable();
        tasks.push(TaskData {
            train,
            test: refs(Source::Test, test_idx, View::Identity),
            validation: Vec::new(),
            class_ids: vec![a, b],
            transform: TransformDescriptor::RotationSweep {
                start_degrees: start,
                end_degrees: end,
            },
            shuffle: false,
        });
    }
    let test_idx: Vec<u32> = (0..data.test.len() as u32)
        .filter(|&i| (data.test.labels[i as usize] as usize) < k)
        .collect();
    let n_test = test_idx.len();
    let pooled: Vec<SampleRef> = test_idx
        .into_iter()
        .enumerate()
        .map(|(j, index)| SampleRef {
            source: Source::Test,
            index,
            view: match opts.test_orientation {
                TestOrientation::Canonical => View::Identity,
                TestOrientation::Spread => View::Rotate((360.0 * j as f64 / n_test as f64) as f32),
            },
        })
        .collect();
    let mut stream = TaskStream::new(Protocol::Mnist360, tasks, seed, data);
    stream.total_classes = k;
    stream.pooled_test = Some(pooled);
    Ok(stream)
}
