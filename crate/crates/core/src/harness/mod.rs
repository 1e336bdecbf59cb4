//! Experiment configuration, seed fan-out, persistence and reporting.

mod config;
mod experiment;
mod grid;
mod report;

pub use config::{
    parse_config, ExperimentSpec, MetricName, DEFAULT_EVAL_GAMES, DEFAULT_OUTPUT_DIR, DEFAULT_SEEDS, MIN_EVAL_GAMES,
};
pub use experiment::{
    aggregate, cell_dir, cic_csv, evaluate, load_bundle, load_pair, mean_and_se, played_game, run_experiment, run_seed,
    seed_dir, spec_hash, train_seed, write_aggregate_csv, AgentLabel, Aggregate, Evaluation, MetricValue, Provenance,
    ResultBundle, SeedResult,
};
pub use grid::{cell_name, cell_spec, parse_cell_name, run_grid, GridAxes, GridCell, GRID_ABLATIONS, GRID_SIZES};
pub use report::{
    bar_chart_svg, check_acceptance, emit_report, parse_criteria, Bar, Criterion, CriterionOutcome, ReportOptions,
    TABLE5_METRICS,
};
