use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use statrs::statistics::Statistics;

use super::checkpoint::{checkpoint_path, load_checkpoint, save_checkpoint, Checkpoint};
use super::config::{EvalCadence, ExperimentConfig};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::learners::{Component, Learner, LearnerKind};
use crate::metrics::{accuracy_on, evaluate, AccuracyMatrix, Evaluation};
use crate::streams::{build_stream, MnistData, SampleRef, TaskStream};
use crate::CODE_VERSION;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Seeds run in parallel when this is `Parallel`.
    pub exec: Execution,
    /// Where per-seed checkpoints are written after every task. Resumes
    /// from matching checkpoints found there.
    pub checkpoint_dir: Option<PathBuf>,
    /// Stop each seed once this many tasks are trained (for interrupted
    /// runs).
    pub stop_after_tasks: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentResult {
    pub component: Component,
    pub evaluation: Evaluation,
    pub matrix: Option<AccuracyMatrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    /// Headline accuracy of the inference component.
    pub accuracy: f64,
    pub components: Vec<ComponentResult>,
    pub validation_accuracy: Option<f64>,
    pub steps: u64,
    pub wall_clock_secs: f64,
}

impl SeedResult {
    pub fn component(&self, c: Component) -> Option<&ComponentResult> {
        self.components.iter().find(|r| r.component == c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Unbiased (n - 1) standard deviation; zero for a single value.
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let mean = values.mean();
        let std = if values.len() > 1 { values.std_dev() } else { 0.0 };
        Self { mean, std }
    }

    /// `XX.XX±Y.YY`
    pub fn cell(&self) -> String {
        format!("{:.2}±{:.2}", self.mean, self.std)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub code_version: String,
    pub config: ExperimentConfig,
    pub buffer: Option<usize>,
    pub inference: Component,
    /// In the order of `config.seeds`.
    pub seeds: Vec<SeedResult>,
    pub accuracy: Summary,
    pub components: Vec<(Component, Summary)>,
    pub validation: Option<Summary>,
    pub wall_clock_secs: f64,
}

impl RunRecord {
    pub fn per_seed(&self) -> Vec<f64> {
        self.seeds.iter().map(|s| s.accuracy).collect()
    }

    pub fn component(&self, c: Component) -> Option<Summary> {
        self.components.iter().find(|(k, _)| *k == c).map(|(_, s)| *s)
    }
}

/// Outcome of one seed: finished, or stopped early by
/// [`RunOptions::stop_after_tasks`].
#[derive(Debug, Clone)]
pub enum SeedOutcome {
    Finished(Box<SeedResult>, Box<Learner>),
    Stopped { tasks_done: usize },
}

pub fn build_seed_stream(config: &ExperimentConfig, data: Arc<MnistData>, seed: u64) -> Result<TaskStream> {
    let stream = build_stream(data, &config.protocol, seed)?;
    Ok(match config.validation_fraction {
        Some(f) => stream.with_validation(f),
        None => stream,
    })
}

/// Runs every seed of a single-buffer config and aggregates the results.
pub fn run_experiment(config: &ExperimentConfig, data: Arc<MnistData>, opts: &RunOptions) -> Result<RunRecord> {
    config.validate()?;
    let buffer = config.buffer()?;
    let start = Instant::now();
    let outcomes = map_indexed(opts.exec, config.seeds.len(), |i| {
        run_seed(config, data.clone(), config.seeds[i], opts)
    });
    let mut seeds = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        match o? {
            SeedOutcome::Finished(r, _) => seeds.push(*r),
            SeedOutcome::Stopped { tasks_done } => {
                return Err(Error::InvalidConfig(format!("run stopped after {tasks_done} tasks")))
            }
        }
    }
    let inference = match config.learner {
        LearnerKind::ClsEr | LearnerKind::MeanEr => Component::Stable,
        _ => Component::Working,
    };
    let accuracy = Summary::of(&seeds.iter().map(|s| s.accuracy).collect::<Vec<_>>());
    let components = seeds[0]
        .components
        .iter()
        .map(|c| {
            let vals: Vec<f64> = seeds
                .iter()
                .map(|s| s.component(c.component).expect("same components").evaluation.headline())
                .collect();
            (c.component, Summary::of(&vals))
        })
        .collect();
    let validation = if config.validation_fraction.is_some() {
        Some(Summary::of(&seeds.iter().filter_map(|s| s.validation_accuracy).collect::<Vec<_>>()))
    } else {
        None
    };
    Ok(RunRecord {
        config_hash: config.hash(),
        code_version: CODE_VERSION.to_string(),
        config: config.clone(),
        buffer,
        inference,
        seeds,
        accuracy,
        components,
        validation,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

/// Every buffer size of `config`, one record each.
pub fn run_all(config: &ExperimentConfig, data: Arc<MnistData>, opts: &RunOptions) -> Result<Vec<RunRecord>> {
    config.expand().iter().map(|c| run_experiment(c, data.clone(), opts)).collect()
}

fn snapshot(learner: &Learner, stream: &TaskStream, upto: usize, rows: &mut [Vec<Option<Vec<f64>>>]) -> Result<()> {
    for (k, c) in Component::ALL.into_iter().enumerate() {
        if let Ok(net) = learner.component_network(c) {
            let e = evaluate(&net, stream, upto, Execution::Sequential)?;
            rows[k][upto] = Some(e.per_task);
        }
    }
    Ok(())
}

/// Trains one seed, task by task. Task boundaries are only used here, to
/// schedule evaluations and checkpoints; the learner never sees them.
pub fn run_seed(config: &ExperimentConfig, data: Arc<MnistData>, seed: u64, opts: &RunOptions) -> Result<SeedOutcome> {
    let stream = build_seed_stream(config, data, seed)?;
    let arch = config.architecture(stream.total_classes)?;
    let hash = config.hash();
    let n_tasks = stream.num_tasks();
    // joint training is a single pass over the union of all tasks
    let n_phases = if config.learner == LearnerKind::Joint { 1 } else { n_tasks };
    let ckpt_file = opts.checkpoint_dir.as_ref().map(|d| checkpoint_path(d, seed));

    let mut resumed = None;
    if let Some(path) = ckpt_file.as_ref().filter(|p| p.exists()) {
        let c = load_checkpoint(path)?;
        if c.config_hash == hash && c.seed == seed {
            log::info!("seed {seed}: resuming after {} tasks", c.tasks_done);
            resumed = Some(c);
        } else {
            log::warn!("seed {seed}: ignoring checkpoint from a different config");
        }
    }
    let (mut learner, mut rows, first, prior_secs) = match resumed {
        Some(c) => (c.learner, c.snapshots, c.tasks_done, c.elapsed_secs),
        None => (
            Learner::new(config.learner, arch, config.learner_config_for(seed)?)?,
            vec![vec![None; n_tasks]; Component::ALL.len()],
            0,
            0.0,
        ),
    };
    let start = Instant::now();
    let elapsed = |s: &Instant| prior_secs + s.elapsed().as_secs_f64();
    let epochs = learner.config().epochs_per_task;
    let batch = learner.config().batch_size;

    for phase in first..n_phases {
        if config.learner == LearnerKind::Joint {
            for epoch in 0..epochs {
                for chunk in stream.joint_order(epoch).chunks(batch) {
                    learner.observe(&stream.materialize(chunk))?;
                }
            }
        } else {
            for epoch in 0..epochs {
                for b in stream.train_batches(phase, epoch, batch) {
                    learner.observe(&b)?;
                }
            }
            if config.eval_cadence == EvalCadence::EveryTask && phase + 1 < n_tasks {
                snapshot(&learner, &stream, phase, &mut rows)?;
            }
        }
        let tasks_done = phase + 1;
        if let Some(path) = &ckpt_file {
            let ckpt = Checkpoint {
                config_hash: hash.clone(),
                code_version: CODE_VERSION.to_string(),
                config: config.clone(),
                seed,
                tasks_done,
                learner: learner.clone(),
                snapshots: rows.clone(),
                elapsed_secs: elapsed(&start),
            };
            save_checkpoint(path, &ckpt)?;
        }
        if tasks_done < n_phases && opts.stop_after_tasks.is_some_and(|s| tasks_done >= s) {
            return Ok(SeedOutcome::Stopped { tasks_done });
        }
    }

    let last = n_tasks - 1;
    let mut components = Vec::new();
    for (k, c) in Component::ALL.into_iter().enumerate() {
        let Ok(net) = learner.component_network(c) else { continue };
        let evaluation = evaluate(&net, &stream, last, Execution::Sequential)?;
        let matrix = if config.eval_cadence == EvalCadence::EveryTask && config.learner != LearnerKind::Joint {
            rows[k][last] = Some(evaluation.per_task.clone());
            Some(AccuracyMatrix::from_rows(n_tasks, &rows[k])?)
        } else {
            None
        };
        components.push(ComponentResult { component: c, evaluation, matrix });
    }
    let inference = learner.inference_component();
    let accuracy = components
        .iter()
        .find(|r| r.component == inference)
        .expect("inference component evaluated")
        .evaluation
        .headline();
    let validation_accuracy = if config.validation_fraction.is_some() {
        let refs: Vec<SampleRef> = stream.tasks.iter().flat_map(|t| t.validation.iter().copied()).collect();
        let net = learner.component_network(inference)?;
        Some(accuracy_on(net.architecture(), net.params(), &stream, &refs, Execution::Sequential)?)
    } else {
        None
    };
    let result = SeedResult {
        seed,
        accuracy,
        components,
        validation_accuracy,
        steps: learner.step_count(),
        wall_clock_secs: elapsed(&start),
    };
    Ok(SeedOutcome::Finished(Box::new(result), Box::new(learner)))
}
