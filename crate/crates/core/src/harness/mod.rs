//! Experiment orchestration: configs and presets, multi-seed runs with
//! checkpoints, hyperparameter sweeps and result reports.

mod analysis;
mod checkpoint;
mod config;
mod presets;
mod report;
mod runner;
mod sweep;

pub use analysis::{analyze, test_refs, train_subset, write_analysis, Analysis, AnalysisOptions};
pub use checkpoint::{checkpoint_path, load_checkpoint, save_checkpoint, Checkpoint, FORMAT_VERSION, MAGIC};
pub use config::{content_hash, default_seeds, EvalCadence, ExperimentConfig};
pub use presets::preset;
pub use report::{
    emit_report, format_table, line_svg, load_records, load_report_csv, matrix_svg, mean_matrix, provenance,
    write_report_csv, ReportRow,
};
pub use runner::{
    build_seed_stream, run_all, run_experiment, run_seed, ComponentResult, RunOptions, RunRecord, SeedOutcome,
    SeedResult, Summary,
};
pub use sweep::{apply_point, grid_points, sweep, SkippedPoint, SweepGrid, SweepPoint, SweepReport, SWEEP_VALIDATION_FRACTION};
