//! Training strategies behind one task-agnostic interface.
//!
//! A [`Learner`] only ever sees stream batches through [`Learner::observe`];
//! there is no way to tell it that a task ended. Per step:
//!
//! * **CLS-ER**: replay a memory batch, pick per exemplar the plastic or
//!   stable logits (whichever gives the ground truth a higher softmax score,
//!   ties to stable), train on CE over stream + memory rows plus a weighted
//!   MSE consistency term on the memory rows, then stochastically update
//!   plastic and stable memories, then offer the stream samples to the
//!   reservoir.
//! * **Mean-ER**: the same with a single EMA memory and no selection.
//! * **ER**: CE over stream + memory rows, no semantic memories.
//! * **SGD** / **JOINT**: plain CE on whatever batches arrive.

mod config;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{backward, forward, softmax, Architecture, Batch, Consistency, LossReport, Network, ParamVector};
use crate::replay::ReplayBuffer;
use crate::seeding;
use crate::semantic::{init_pair, SemanticMemory};
use crate::streams::TaskStream;

pub use config::{LearnerConfig, LearnerKind, SingleMemoryConfig};

/// Which set of weights to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "kebab-case")]
pub enum Component {
    Working,
    Plastic,
    Stable,
}

impl Component {
    pub const ALL: [Component; 3] = [Component::Working, Component::Plastic, Component::Stable];

    pub fn name(self) -> &'static str {
        match self {
            Component::Working => "working",
            Component::Plastic => "plastic",
            Component::Stable => "stable",
        }
    }
}

impl std::str::FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "working" => Ok(Component::Working),
            "plastic" => Ok(Component::Plastic),
            "stable" | "ema" => Ok(Component::Stable),
            other => Err(Error::InvalidConfig(format!("unknown component {other}"))),
        }
    }
}

/// Full training state of one learner. Mean-ER keeps its single EMA memory
/// in the `stable` slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Learner {
    kind: LearnerKind,
    config: LearnerConfig,
    working: Network,
    plastic: Option<SemanticMemory>,
    stable: Option<SemanticMemory>,
    buffer: Option<ReplayBuffer>,
    step_count: u64,
}

impl Learner {
    pub fn new(kind: LearnerKind, arch: Architecture, config: LearnerConfig) -> Result<Self> {
        config.validate(kind)?;
        let seed = config.seed;
        let working = Network::init(arch, seeding::derive(seed, &[seeding::tag("working")]))?;
        let buffer = if kind.uses_replay() {
            Some(ReplayBuffer::new(
                config.buffer_budget,
                working.architecture().input_dim,
                seeding::rng(seed, &[seeding::tag("buffer")]),
            )?)
        } else {
            None
        };
        let memory_seed = seeding::derive(seed, &[seeding::tag("memories")]);
        let (plastic, stable) = match kind {
            LearnerKind::ClsEr => {
                let pair = config.memory_pair.expect("validated");
                let (p, s) = init_pair(working.params(), &pair, memory_seed)?;
                (Some(p), Some(s))
            }
            LearnerKind::MeanEr => {
                let m = config.single_memory.expect("validated");
                let mem = SemanticMemory::new(
                    working.params(),
                    m.alpha,
                    m.rate,
                    seeding::rng(memory_seed, &[seeding::tag("stable")]),
                )?;
                (None, Some(mem))
            }
            _ => (None, None),
        };
        Ok(Self {
            kind,
            config,
            working,
            plastic,
            stable,
            buffer,
            step_count: 0,
        })
    }

    pub fn kind(&self) -> LearnerKind {
        self.kind
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    pub fn architecture(&self) -> &Architecture {
        self.working.architecture()
    }

    pub fn working(&self) -> &Network {
        &self.working
    }

    pub fn plastic(&self) -> Option<&SemanticMemory> {
        self.plastic.as_ref()
    }

    pub fn stable(&self) -> Option<&SemanticMemory> {
        self.stable.as_ref()
    }

    pub fn buffer(&self) -> Option<&ReplayBuffer> {
        self.buffer.as_ref()
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Components this learner can evaluate.
    pub fn components(&self) -> Vec<Component> {
        Component::ALL
            .into_iter()
            .filter(|&c| self.component_params(c).is_ok())
            .collect()
    }

    /// Inference default: stable memory when present, else the working model.
    pub fn inference_component(&self) -> Component {
        if self.stable.is_some() {
            Component::Stable
        } else {
            Component::Working
        }
    }

    pub fn component_params(&self, which: Component) -> Result<&ParamVector> {
        match which {
            Component::Working => Ok(self.working.params()),
            Component::Plastic => self
                .plastic
                .as_ref()
                .map(SemanticMemory::params)
                .ok_or(Error::MissingComponent("plastic")),
            Component::Stable => self
                .stable
                .as_ref()
                .map(SemanticMemory::params)
                .ok_or(Error::MissingComponent("stable")),
        }
    }

    pub fn component_network(&self, which: Component) -> Result<Network> {
        Network::new(self.architecture().clone(), self.component_params(which)?.clone())
    }

    pub fn predict(&self, inputs: ArrayView2<'_, f64>, which: Component) -> Result<Array2<f64>> {
        forward(self.architecture(), self.component_params(which)?, inputs)
    }

    /// One training step on a stream batch.
    pub fn observe(&mut self, batch: &Batch) -> Result<LossReport> {
        if batch.is_empty() {
            return Err(Error::InvalidConfig("empty stream batch".into()));
        }
        let report = match self.kind {
            LearnerKind::ClsEr => self.cls_er_step(batch)?,
            LearnerKind::MeanEr => self.mean_er_step(batch)?,
            LearnerKind::Er => self.er_step(batch)?,
            LearnerKind::Sgd | LearnerKind::Joint => self.sgd_step(batch)?,
        };
        self.step_count += 1;
        Ok(report)
    }

    fn replay_batch(&mut self) -> Batch {
        let k = self.config.memory_batch_size;
        match self.buffer.as_mut() {
            Some(b) => b.sample_batch(k),
            None => Batch::empty(self.working.architecture().input_dim),
        }
    }

    fn apply(&mut self, report_and_grad: (LossReport, ParamVector)) -> Result<LossReport> {
        let (report, grad) = report_and_grad;
        self.working.params_mut().sgd_update(&grad, self.config.lr)?;
        Ok(report)
    }

    fn offer(&mut self, batch: &Batch) -> Result<()> {
        if let Some(b) = self.buffer.as_mut() {
            b.offer_batch(batch)?;
        }
        Ok(())
    }

    fn update_memories(&mut self) -> Result<()> {
        let working = self.working.params();
        if let Some(p) = self.plastic.as_mut() {
            p.maybe_update(working)?;
        }
        if let Some(s) = self.stable.as_mut() {
            s.maybe_update(working)?;
        }
        Ok(())
    }

    fn consistency_step(&mut self, batch: &Batch, targets_from: TargetSource) -> Result<LossReport> {
        let memory = self.replay_batch();
        let report = if memory.is_empty() {
            let g = backward(&self.working, batch, None, self.config.lambda)?;
            self.apply(g)?
        } else {
            let arch = self.working.architecture().clone();
            let targets = match targets_from {
                TargetSource::Selected => {
                    let plastic = self.plastic.as_ref().expect("cls-er has a plastic memory");
                    let stable = self.stable.as_ref().expect("cls-er has a stable memory");
                    let zp = plastic.logits(&arch, memory.inputs.view())?;
                    let zs = stable.logits(&arch, memory.inputs.view())?;
                    select_targets(zp.view(), zs.view(), &memory.labels)?.0
                }
                TargetSource::Single => {
                    let m = self.stable.as_ref().expect("mean-er has one memory");
                    m.logits(&arch, memory.inputs.view())?
                }
            };
            let joined = batch.concat(&memory)?;
            let mask: Vec<bool> = (0..joined.len()).map(|i| i >= batch.len()).collect();
            let g = backward(
                &self.working,
                &joined,
                Some(Consistency {
                    targets: targets.view(),
                    mask: &mask,
                }),
                self.config.lambda,
            )?;
            self.apply(g)?
        };
        self.update_memories()?;
        self.offer(batch)?;
        Ok(report)
    }

    fn cls_er_step(&mut self, batch: &Batch) -> Result<LossReport> {
        self.consistency_step(batch, TargetSource::Selected)
    }

    fn mean_er_step(&mut self, batch: &Batch) -> Result<LossReport> {
        self.consistency_step(batch, TargetSource::Single)
    }

    fn er_step(&mut self, batch: &Batch) -> Result<LossReport> {
        let memory = self.replay_batch();
        let joined = if memory.is_empty() {
            batch.clone()
        } else {
            batch.concat(&memory)?
        };
        let g = backward(&self.working, &joined, None, 0.0)?;
        let report = self.apply(g)?;
        self.offer(batch)?;
        Ok(report)
    }

    fn sgd_step(&mut self, batch: &Batch) -> Result<LossReport> {
        let g = backward(&self.working, batch, None, 0.0)?;
        self.apply(g)
    }
}

#[derive(Clone, Copy)]
enum TargetSource {
    Selected,
    Single,
}

/// Per-row replay targets: the plastic row when its softmax score on the
/// ground-truth class strictly exceeds the stable one, else the stable row.
/// Also returns which rows came from the plastic memory.
pub fn select_targets(
    plastic: ArrayView2<'_, f64>,
    stable: ArrayView2<'_, f64>,
    labels: &[usize],
) -> Result<(Array2<f64>, Vec<bool>)> {
    crate::error::ensure_dim("selection rows", plastic.nrows(), stable.nrows())?;
    crate::error::ensure_dim("selection labels", plastic.nrows(), labels.len())?;
    crate::error::ensure_dim("selection columns", plastic.ncols(), stable.ncols())?;
    let mut out = stable.to_owned();
    let mut from_plastic = vec![false; labels.len()];
    for (i, &y) in labels.iter().enumerate() {
        let p = softmax(plastic.row(i))[y];
        let s = softmax(stable.row(i))[y];
        if p > s {
            out.row_mut(i).assign(&plastic.row(i));
            from_plastic[i] = true;
        }
    }
    Ok((out, from_plastic))
}

/// Upper-bound reference: SGD over the shuffled union of every task.
pub fn train_joint(stream: &TaskStream, arch: Architecture, config: &LearnerConfig) -> Result<Network> {
    let mut learner = Learner::new(LearnerKind::Joint, arch, config.clone())?;
    for epoch in 0..config.epochs_per_task {
        let order = stream.joint_order(epoch);
        for chunk in order.chunks(config.batch_size) {
            learner.observe(&stream.materialize(chunk))?;
        }
    }
    Ok(learner.working)
}
