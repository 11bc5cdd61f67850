//! Benchmark acceptance run: trains every configuration the criteria need
//! on real MNIST (10 seeds each) and prints one PASS/FAIL line per criterion.
//! Failures only change the exit status when `CLSER_ACCEPTANCE_STRICT=1`, so
//! the rest of the workspace suite still runs. Results are also written to
//! `target/acceptance/`.
//!
//! `CLSER_ACCEPTANCE_SEEDS` lowers the seed count for quick local checks;
//! the criteria are defined for the default of 10.

mod common;

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clser::exec::Execution;
use clser::harness::{
    analyze, build_seed_stream, checkpoint_path, emit_report, format_table, load_checkpoint, preset, run_experiment,
    run_seed, Analysis, AnalysisOptions, ExperimentConfig, RunOptions, RunRecord, SeedOutcome,
};
use clser::learners::{Component, LearnerKind};
use clser::streams::{MnistData, Protocol};

struct Verdicts {
    lines: Vec<(bool, String)>,
}

impl Verdicts {
    fn check(&mut self, id: &str, ok: bool, detail: String) {
        let line = format!("[{}] {id}: {detail}", if ok { "PASS" } else { "FAIL" });
        println!("{line}");
        self.lines.push((ok, line));
    }
}

struct Bench {
    data: Arc<MnistData>,
    seeds: Vec<u64>,
    out: PathBuf,
    records: Vec<RunRecord>,
}

impl Bench {
    fn config(&self, protocol: Protocol, learner: LearnerKind, buffer: usize) -> ExperimentConfig {
        let mut c = preset(protocol, learner, buffer).expect("preset");
        c.seeds = self.seeds.clone();
        c
    }

    fn run(&mut self, c: &ExperimentConfig, opts: &RunOptions) -> RunRecord {
        eprintln!(
            "running {} {} buffer {:?} over {} seeds",
            c.protocol().name(),
            c.learner.name(),
            c.buffer().unwrap(),
            c.seeds.len()
        );
        let r = run_experiment(c, self.data.clone(), opts).expect("run");
        eprintln!("  -> {} ({:.0} s)", r.accuracy.cell(), r.wall_clock_secs);
        self.records.push(r.clone());
        r
    }

    /// Runs with checkpoints so the final models can be analysed.
    fn run_with_models(&mut self, c: &ExperimentConfig, tag: &str) -> (RunRecord, Vec<Analysis>) {
        let dir = self.out.join(format!("checkpoints-{tag}"));
        let _ = std::fs::remove_dir_all(&dir);
        let opts = RunOptions {
            checkpoint_dir: Some(dir.clone()),
            ..Default::default()
        };
        let r = self.run(c, &opts);
        let analyses = c
            .seeds
            .iter()
            .map(|&s| {
                let ckpt = load_checkpoint(&checkpoint_path(&dir, s)).expect("final checkpoint");
                let stream = build_seed_stream(c, self.data.clone(), s).unwrap();
                let model = ckpt.learner.component_network(ckpt.learner.inference_component()).unwrap();
                let opts = AnalysisOptions { seed: s, ..Default::default() };
                analyze(&model, &stream, &opts, Execution::Parallel).unwrap()
            })
            .collect();
        let _ = std::fs::remove_dir_all(&dir);
        (r, analyses)
    }
}

fn band(value: f64, lo: f64, hi: f64) -> bool {
    value >= lo && value <= hi
}

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.into_iter().collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn mean_vec(vs: &[Vec<f64>]) -> Vec<f64> {
    (0..vs[0].len()).map(|i| mean(vs.iter().map(|v| v[i]))).collect()
}

fn comp(r: &RunRecord, c: Component) -> f64 {
    r.component(c).map(|s| s.mean).unwrap_or(f64::NAN)
}

fn main() -> ExitCode {
    // `cargo test` passes harness flags such as `--nocapture`; listing mode
    // must not start the benchmark
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut v = Verdicts { lines: Vec::new() };
    let n_seeds: u64 = std::env::var("CLSER_ACCEPTANCE_SEEDS")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(10);
    let out = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../target/acceptance");
    std::fs::create_dir_all(&out).unwrap();

    property_criteria(&mut v);

    let Some(data) = common::real_mnist() else {
        for id in ["1", "2", "3", "4", "5", "6", "7", "11", "12"] {
            v.check(id, false, "MNIST not found (set CLSER_DATA_DIR)".into());
        }
        return summary(&v);
    };
    let mut b = Bench {
        data,
        seeds: (0..n_seeds).collect(),
        out: out.clone(),
        records: Vec::new(),
    };
    println!("training on real MNIST with {n_seeds} seeds per configuration");

    // S-MNIST family
    let cls500_cfg = b.config(Protocol::SMnist, LearnerKind::ClsEr, 500);
    let (cls500, cls500_an) = b.run_with_models(&cls500_cfg, "cls-er-500");
    let er500_cfg = b.config(Protocol::SMnist, LearnerKind::Er, 500);
    let (er500, er500_an) = b.run_with_models(&er500_cfg, "er-500");
    let cls200 = b.run(&b.config(Protocol::SMnist, LearnerKind::ClsEr, 200), &RunOptions::default());
    let er200 = b.run(&b.config(Protocol::SMnist, LearnerKind::Er, 200), &RunOptions::default());
    let mean200 = b.run(&b.config(Protocol::SMnist, LearnerKind::MeanEr, 200), &RunOptions::default());
    let sgd = b.run(&b.config(Protocol::SMnist, LearnerKind::Sgd, 0), &RunOptions::default());
    let joint = b.run(&b.config(Protocol::SMnist, LearnerKind::Joint, 0), &RunOptions::default());

    let per_seed_secs = mean(cls500.seeds.iter().map(|s| s.wall_clock_secs));
    v.check(
        "1",
        band(cls500.accuracy.mean, 89.5, 94.5) && per_seed_secs < 300.0,
        format!(
            "S-MNIST buffer 500 CLS-ER stable {} (reference 92.05, band [89.5, 94.5]); {per_seed_secs:.1} s/seed (< 300)",
            cls500.accuracy.cell()
        ),
    );
    let gap = cls200.accuracy.mean - er200.accuracy.mean;
    v.check(
        "2",
        band(cls200.accuracy.mean, 89.54 - 2.5, 89.54 + 2.5) && band(er200.accuracy.mean, 80.43 - 2.5, 80.43 + 2.5) && gap >= 5.0,
        format!(
            "S-MNIST buffer 200 CLS-ER {} (reference 89.54 ±2.5), ER {} (reference 80.43 ±2.5), gap {gap:.2} (>= 5)",
            cls200.accuracy.cell(),
            er200.accuracy.cell()
        ),
    );

    let r = b.run(&b.config(Protocol::RMnist, LearnerKind::ClsEr, 500), &RunOptions::default());
    v.check(
        "3",
        band(r.accuracy.mean, 91.5, 96.5),
        format!("R-MNIST buffer 500 CLS-ER {} (reference 94.06, band [91.5, 96.5])", r.accuracy.cell()),
    );
    let p = b.run(&b.config(Protocol::PMnist, LearnerKind::ClsEr, 500), &RunOptions::default());
    v.check(
        "4",
        band(p.accuracy.mean, 85.8, 90.8),
        format!("P-MNIST buffer 500 CLS-ER {} (reference 88.30, band [85.8, 90.8])", p.accuracy.cell()),
    );
    let m360 = b.run(&b.config(Protocol::Mnist360, LearnerKind::ClsEr, 500), &RunOptions::default());
    let m360_er = b.run(&b.config(Protocol::Mnist360, LearnerKind::Er, 500), &RunOptions::default());
    let in_band = band(m360.accuracy.mean, 72.0, 79.0);
    let margin = m360.accuracy.mean - m360_er.accuracy.mean;
    v.check(
        "5",
        in_band || margin >= 5.0,
        format!(
            "MNIST-360 buffer 500 CLS-ER {} (reference 75.70, band [72, 79]: {}), ER {} (margin {margin:.2}, >= 5: {})",
            m360.accuracy.cell(),
            if in_band { "in" } else { "out" },
            m360_er.accuracy.cell(),
            margin >= 5.0
        ),
    );

    let lo = sgd.accuracy.mean;
    let hi = joint.accuracy.mean;
    let cl = [("CLS-ER/500", &cls500), ("CLS-ER/200", &cls200), ("ER/500", &er500), ("ER/200", &er200), ("Mean-ER/200", &mean200)];
    let between = cl.iter().all(|(_, r)| r.accuracy.mean > lo && r.accuracy.mean < hi);
    v.check(
        "6",
        band(lo, 19.60 - 1.5, 19.60 + 1.5) && band(hi, 95.57 - 1.0, 95.57 + 1.0) && between,
        format!(
            "S-MNIST SGD {} (reference 19.60 ±1.5), JOINT {} (reference 95.57 ±1.0); methods strictly between: {} [{}]",
            sgd.accuracy.cell(),
            joint.accuracy.cell(),
            between,
            cl.iter().map(|(n, r)| format!("{n} {:.2}", r.accuracy.mean)).collect::<Vec<_>>().join(", ")
        ),
    );

    let (st, wk) = (comp(&cls500, Component::Stable), comp(&cls500, Component::Working));
    v.check(
        "7",
        st >= wk && mean200.accuracy.mean <= cls200.accuracy.mean,
        format!(
            "S-MNIST buffer 500 stable {st:.2} >= working {wk:.2}; buffer 200 Mean-ER {:.2} <= CLS-ER {:.2}",
            mean200.accuracy.mean, cls200.accuracy.mean
        ),
    );

    let spread = |a: &[Analysis]| mean(a.iter().map(Analysis::probability_spread));
    let (sc, se) = (spread(&cls500_an), spread(&er500_an));
    let ece = |a: &[Analysis]| mean(a.iter().map(|x| x.calibration.ece));
    let (ec, ee) = (ece(&cls500_an), ece(&er500_an));
    let curve = |a: &[Analysis]| mean_vec(&a.iter().map(|x| x.perturbation.points.iter().map(|p| p.accuracy).collect()).collect::<Vec<_>>());
    let (cc, ce) = (curve(&cls500_an), curve(&er500_an));
    let dominated = cc.iter().zip(&ce).all(|(c, e)| c >= e);
    let sigmas: Vec<f64> = cls500_an[0].perturbation.points.iter().map(|p| p.sigma).collect();
    v.check(
        "11",
        sc < se && ec < ee && dominated,
        format!(
            "S-MNIST buffer 500: task-probability max/min CLS-ER {sc:.3} < ER {se:.3}; ECE {ec:.4} < {ee:.4}; \
             accuracy under noise (sigma {sigmas:?}) CLS-ER {} vs ER {}",
            fmt_curve(&cc),
            fmt_curve(&ce)
        ),
    );

    determinism(&mut v, &b, &cls500_cfg, &cls500);

    let _ = emit_report(&b.records, &out, true);
    std::fs::write(out.join("acceptance.txt"), v.lines.iter().map(|(_, l)| format!("{l}\n")).collect::<String>()).ok();
    eprint!("{}", format_table(&b.records));
    summary(&v)
}

fn fmt_curve(c: &[f64]) -> String {
    format!("[{}]", c.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join(", "))
}

fn property_criteria(v: &mut Verdicts) {
    let chi = common::reservoir_chi_square(200, 1000, 100);
    let sizes = common::reservoir_size_invariant(100_000);
    v.check(
        "8",
        chi.p_value > 0.001 && sizes.is_ok(),
        format!(
            "reservoir retention chi2 {:.1} on {} dof, p = {:.4} (> 0.001); size invariant over 1e5 ops: {}",
            chi.statistic,
            chi.dof,
            chi.p_value,
            sizes.map_or_else(|e| e, |_| "holds".into())
        ),
    );

    let g = common::gradient_suite(50);
    let sm = common::softmax_properties(2000);
    v.check(
        "9",
        g.networks == 50 && g.max_rel_error < 1e-5 && sm < 1e-12,
        format!(
            "finite differences on {} networks ({} coordinates): max relative error {:.2e} (< 1e-5); softmax normalisation/shift deviation {:.1e}",
            g.networks, g.coordinates, g.max_rel_error, sm
        ),
    );

    let convex = common::ema_convex_violation(2000);
    let geo = [0.5, 0.9, 0.99, 0.999].iter().map(|&a| common::ema_geometric_error(a, 300)).fold(0.0, f64::max);
    let rates: Vec<(f64, u64, f64, f64)> = [0.1, 0.5, 0.8, 0.9]
        .iter()
        .enumerate()
        .map(|(k, &r)| {
            let (f, m, s) = common::ema_rate(r, 10_000, 40 + k as u64);
            (r, f, m, s)
        })
        .collect();
    let rates_ok = rates.iter().all(|&(_, f, m, s)| (f as f64 - m).abs() <= 3.0 * s);
    v.check(
        "10",
        convex <= 1e-12 && geo < 1e-9 && rates_ok,
        format!(
            "EMA convex-hull violation {convex:.1e}; alpha^t law deviation {geo:.1e}; fired/expected over 1e4 calls {}",
            rates.iter().map(|(r, f, m, s)| format!("r={r}: {f} vs {m:.0}±{:.0}", 3.0 * s)).collect::<Vec<_>>().join(", ")
        ),
    );

    let data = common::real_mnist().unwrap_or_else(|| Arc::new(MnistData::synthetic(300, 10, 0)));
    let g = common::gcil_properties(data);
    v.check(
        "13",
        g.is_ok(),
        match g {
            Ok(s) => format!(
                "CIFAR/Tiny-ImageNet rows not reproduced (out of scope); GCIL sampler on MNIST: {} phases, exact quotas, \
                 non-increasing long tail, {} recurring classes",
                s.phases, s.recurring_classes
            ),
            Err(e) => e,
        },
    );
}

fn determinism(v: &mut Verdicts, b: &Bench, config: &ExperimentConfig, first: &RunRecord) {
    let mut c = config.clone();
    c.seeds = first.config.seeds.iter().take(2).copied().collect();
    let again = run_experiment(&c, b.data.clone(), &RunOptions::default()).expect("rerun");
    let rerun_ok = again.seeds.iter().zip(&first.seeds).all(|(a, f)| a.accuracy == f.accuracy && a.components == f.components);

    let seed = c.seeds[0];
    let dir = b.out.join("checkpoints-resume");
    let _ = std::fs::remove_dir_all(&dir);
    let opts = RunOptions {
        checkpoint_dir: Some(dir.clone()),
        stop_after_tasks: Some(2),
        ..Default::default()
    };
    let stopped = matches!(run_seed(&c, b.data.clone(), seed, &opts), Ok(SeedOutcome::Stopped { tasks_done: 2 }));
    let resumed = run_seed(
        &c,
        b.data.clone(),
        seed,
        &RunOptions {
            stop_after_tasks: None,
            ..opts
        },
    );
    let _ = std::fs::remove_dir_all(&dir);
    let resume_ok = match resumed {
        Ok(SeedOutcome::Finished(r, _)) => r.accuracy == first.seeds[0].accuracy && r.components == first.seeds[0].components,
        _ => false,
    };
    v.check(
        "12",
        rerun_ok && stopped && resume_ok,
        format!(
            "S-MNIST buffer 500 CLS-ER rerun of seeds {:?} bit-identical: {rerun_ok}; stop after 2 tasks + resume equals uninterrupted: {}",
            c.seeds,
            stopped && resume_ok
        ),
    );
}

fn summary(v: &Verdicts) -> ExitCode {
    let failed = v.lines.iter().filter(|(ok, _)| !ok).count();
    println!("acceptance: {} passed, {failed} failed", v.lines.len() - failed);
    let strict = std::env::var("CLSER_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if failed == 0 || !strict {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
