use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use clser::exec::Execution;
use clser::harness::{
    analyze, build_seed_stream, emit_report, format_table, load_checkpoint, load_records, preset, run_all, sweep,
    write_analysis, AnalysisOptions, EvalCadence, ExperimentConfig, RunOptions, SweepGrid,
};
use clser::learners::{Component, LearnerKind};
use clser::metrics::NoiseMode;
use clser::streams::{build_stream, load_mnist, MnistData, Protocol};

#[derive(Parser)]
#[command(name = "clser", version, about = "Dual-memory experience replay experiments on MNIST-family streams")]
struct Cli {
    /// Directory holding the four MNIST IDX files (optionally gzipped).
    #[arg(long, env = "CLSER_DATA_DIR", global = true)]
    data_dir: Option<PathBuf>,
    /// Run everything on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate one configuration over several seeds.
    Run(RunArgs),
    /// Grid search over consistency weight and memory settings.
    Sweep(SweepArgs),
    /// Rebuild result tables from saved records.
    Report(ReportArgs),
    /// Task probabilities, calibration and weight-noise robustness of a
    /// checkpointed model.
    Analyze(AnalyzeArgs),
    /// Write the manifest of a task stream.
    Datagen(DatagenArgs),
}

#[derive(Args, Clone)]
struct ExperimentArgs {
    /// JSON experiment config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "s-mnist")]
    protocol: String,
    #[arg(long, default_value = "cls-er")]
    learner: String,
    /// Buffer sizes; one record per size.
    #[arg(long, value_delimiter = ',', default_value = "500")]
    buffer: Vec<usize>,
    /// Explicit seed list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// First of `--n-seeds` consecutive seeds.
    #[arg(long, default_value_t = 0)]
    seed_base: u64,
    #[arg(long, default_value_t = 10)]
    n_seeds: usize,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    memory_batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    alpha_stable: Option<f64>,
    #[arg(long)]
    alpha_plastic: Option<f64>,
    #[arg(long)]
    rate_stable: Option<f64>,
    #[arg(long)]
    rate_plastic: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    /// Task count of the domain-incremental protocols.
    #[arg(long)]
    domain_tasks: Option<usize>,
    /// every-task or final-only.
    #[arg(long)]
    eval_cadence: Option<String>,
    #[arg(long)]
    validation_fraction: Option<f64>,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    /// Write per-seed checkpoints after every task and resume from them.
    #[arg(long)]
    checkpoints: bool,
    /// Stop each seed after this many tasks (requires --checkpoints).
    #[arg(long)]
    stop_after: Option<usize>,
    #[arg(long)]
    svg: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    #[arg(long, value_delimiter = ',')]
    grid_lambda: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    grid_alpha_stable: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    grid_alpha_plastic: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    grid_rate_stable: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    grid_rate_plastic: Vec<f64>,
}

#[derive(Args)]
struct ReportArgs {
    /// Directories containing record-*.json files.
    #[arg(required = true)]
    dirs: Vec<PathBuf>,
    #[arg(long, default_value = "report")]
    out: PathBuf,
    #[arg(long)]
    svg: bool,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Checkpoint written by `run --checkpoints`.
    checkpoint: PathBuf,
    #[arg(long, default_value = "stable")]
    component: String,
    #[arg(long, default_value_t = 10)]
    bins: usize,
    #[arg(long, value_delimiter = ',')]
    sigmas: Option<Vec<f64>>,
    #[arg(long, default_value_t = 20)]
    draws: usize,
    /// Scale noise by each layer's RMS weight.
    #[arg(long)]
    relative: bool,
    #[arg(long, default_value_t = 2000)]
    subset: usize,
    #[arg(long, default_value = "analysis")]
    out: PathBuf,
    #[arg(long)]
    svg: bool,
}

#[derive(Args)]
struct DatagenArgs {
    #[arg(long, default_value = "s-mnist")]
    protocol: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    domain_tasks: Option<usize>,
    #[arg(long, default_value = "manifest.json")]
    out: PathBuf,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    let data_dir = cli.data_dir.clone().unwrap_or_else(clser::streams::default_data_dir);
    let data = || -> Result<Arc<MnistData>> {
        Ok(Arc::new(
            load_mnist(&data_dir).with_context(|| format!("loading MNIST from {}", data_dir.display()))?,
        ))
    };
    match cli.command {
        Command::Run(args) => cmd_run(args, data()?, exec),
        Command::Sweep(args) => cmd_sweep(args, data()?, exec),
        Command::Report(args) => cmd_report(args),
        Command::Analyze(args) => cmd_analyze(args, data()?, exec),
        Command::Datagen(args) => cmd_datagen(args, data()?),
    }
}

fn resolve(a: &ExperimentArgs) -> Result<ExperimentConfig> {
    let mut c = match &a.config {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?).with_context(|| format!("parsing {}", p.display()))?,
        None => {
            let protocol: Protocol = a.protocol.parse()?;
            let learner: LearnerKind = a.learner.parse()?;
            let mut c = preset(protocol, learner, a.buffer[0])?;
            if learner.uses_replay() {
                c.buffer_sizes = a.buffer.clone();
            }
            c
        }
    };
    c.seeds = match &a.seeds {
        Some(s) => s.clone(),
        None => clser::harness::default_seeds(a.seed_base, a.n_seeds),
    };
    let lc = &mut c.learner_config;
    if let Some(v) = a.lr {
        lc.lr = v;
    }
    if let Some(v) = a.lambda {
        lc.lambda = v;
    }
    if let Some(v) = a.batch_size {
        lc.batch_size = v;
    }
    if let Some(v) = a.memory_batch_size {
        lc.memory_batch_size = v;
    }
    if let Some(v) = a.epochs {
        lc.epochs_per_task = v;
    }
    if let Some(p) = lc.memory_pair.as_mut() {
        p.alpha_stable = a.alpha_stable.unwrap_or(p.alpha_stable);
        p.alpha_plastic = a.alpha_plastic.unwrap_or(p.alpha_plastic);
        p.rate_stable = a.rate_stable.unwrap_or(p.rate_stable);
        p.rate_plastic = a.rate_plastic.unwrap_or(p.rate_plastic);
    }
    if let Some(m) = lc.single_memory.as_mut() {
        m.alpha = a.alpha_stable.unwrap_or(m.alpha);
        m.rate = a.rate_stable.unwrap_or(m.rate);
    }
    if let Some(h) = &a.hidden {
        c.hidden = h.clone();
    }
    if let Some(n) = a.domain_tasks {
        c.protocol.domain_tasks = n;
    }
    if let Some(e) = &a.eval_cadence {
        c.eval_cadence = match e.as_str() {
            "every-task" => EvalCadence::EveryTask,
            "final-only" => EvalCadence::FinalOnly,
            other => bail!("unknown eval cadence {other}"),
        };
    }
    if a.validation_fraction.is_some() {
        c.validation_fraction = a.validation_fraction;
    }
    c.output_dir = Some(a.out.clone());
    c.validate()?;
    Ok(c)
}

fn cmd_run(args: RunArgs, data: Arc<MnistData>, exec: Execution) -> Result<()> {
    if args.stop_after.is_some() && !args.checkpoints {
        bail!("--stop-after needs --checkpoints");
    }
    let config = resolve(&args.exp)?;
    let mut records = Vec::new();
    for c in config.expand() {
        let dir = args.exp.out.join(&c.hash()[..12]);
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join("config.json"), serde_json::to_string_pretty(&c)?)?;
        let opts = RunOptions {
            exec,
            checkpoint_dir: args.checkpoints.then(|| dir.join("checkpoints")),
            stop_after_tasks: args.stop_after,
        };
        log::info!(
            "{} on {} (buffer {:?}), {} seeds -> {}",
            c.learner.name(),
            c.protocol().name(),
            c.buffer()?,
            c.seeds.len(),
            dir.display()
        );
        match run_all(&c, data.clone(), &opts) {
            Ok(mut r) => {
                emit_report(&r, &dir, args.svg)?;
                records.append(&mut r);
            }
            Err(clser::Error::InvalidConfig(msg)) if msg.starts_with("run stopped") => {
                log::info!("{msg}; rerun with --checkpoints to resume");
                return Ok(());
            }
            Err(e) => return Err(e.into()),
        }
    }
    print!("{}", format_table(&records));
    Ok(())
}

fn cmd_sweep(args: SweepArgs, data: Arc<MnistData>, exec: Execution) -> Result<()> {
    let config = resolve(&args.exp)?;
    let grid = SweepGrid {
        lambda: args.grid_lambda,
        alpha_stable: args.grid_alpha_stable,
        alpha_plastic: args.grid_alpha_plastic,
        rate_stable: args.grid_rate_stable,
        rate_plastic: args.grid_rate_plastic,
    };
    for c in config.expand() {
        let report = sweep(&c, &grid, data.clone(), &RunOptions { exec, ..Default::default() })?;
        let dir = args.exp.out.join(format!("sweep-{}", &c.hash()[..12]));
        emit_report(&report.records, &dir, false)?;
        std::fs::write(dir.join("skipped.json"), serde_json::to_string_pretty(&report.skipped)?)?;
        for s in &report.skipped {
            println!("skipped {:?}: {}", s.point, s.reason);
        }
        for r in &report.records {
            let v = r.validation.map_or("-".into(), |v| v.cell());
            println!("{}  validation {v}  test {}", &r.config_hash[..12], r.accuracy.cell());
        }
        if let Some(best) = report.best() {
            println!("best on validation: {}", &best.config_hash[..12]);
        }
    }
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let mut records = Vec::new();
    for d in &args.dirs {
        records.extend(collect_records(d)?);
    }
    if records.is_empty() {
        bail!("no records found");
    }
    records.sort_by(|a, b| a.config_hash.cmp(&b.config_hash));
    records.dedup_by(|a, b| a.config_hash == b.config_hash);
    emit_report(&records, &args.out, args.svg)?;
    print!("{}", format_table(&records));
    Ok(())
}

fn collect_records(dir: &Path) -> Result<Vec<clser::harness::RunRecord>> {
    let mut out = load_records(dir).with_context(|| format!("reading records in {}", dir.display()))?;
    for entry in std::fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() {
            out.extend(collect_records(&p)?);
        }
    }
    Ok(out)
}

fn cmd_analyze(args: AnalyzeArgs, data: Arc<MnistData>, exec: Execution) -> Result<()> {
    let ckpt = load_checkpoint(&args.checkpoint).with_context(|| format!("loading {}", args.checkpoint.display()))?;
    let component: Component = args.component.parse()?;
    let stream = build_seed_stream(&ckpt.config, data, ckpt.seed)?;
    let model = ckpt.learner.component_network(component)?;
    let opts = AnalysisOptions {
        bins: args.bins,
        sigmas: args.sigmas.unwrap_or_else(|| clser::metrics::DEFAULT_SIGMAS.to_vec()),
        draws: args.draws,
        noise: if args.relative { NoiseMode::Relative } else { NoiseMode::Absolute },
        subset: args.subset,
        seed: ckpt.seed,
    };
    let a = analyze(&model, &stream, &opts, exec)?;
    let label = format!("{}-seed{}-{}", ckpt.config.learner.name(), ckpt.seed, component.name());
    let provenance = format!("config {} / {}", ckpt.config_hash, ckpt.code_version);
    write_analysis(&a, &args.out, &label, &provenance, args.svg)?;
    println!("task probabilities {:?}", a.task_probabilities);
    println!("ECE {:.4}", a.calibration.ece);
    for p in &a.perturbation.points {
        println!("sigma {:<6} loss {:.4} accuracy {:.2}", p.sigma, p.loss, p.accuracy);
    }
    Ok(())
}

fn cmd_datagen(args: DatagenArgs, data: Arc<MnistData>) -> Result<()> {
    let mut pc = clser::streams::ProtocolConfig::new(args.protocol.parse()?);
    if let Some(n) = args.domain_tasks {
        pc.domain_tasks = n;
    }
    let stream = build_stream(data, &pc, args.seed)?;
    let manifest = serde_json::json!({
        "config_hash": clser::harness::content_hash(&(&pc, args.seed)),
        "code_version": clser::CODE_VERSION,
        "protocol_config": pc,
        "manifest": stream.manifest(),
    });
    if let Some(parent) = args.out.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(&args.out, serde_json::to_string_pretty(&manifest)?)?;
    println!("{} tasks written to {}", stream.num_tasks(), args.out.display());
    Ok(())
}
