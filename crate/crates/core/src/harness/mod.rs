//! Experiment orchestration: configuration, scenario construction, sweeps,
//! IDX ingestion, output files and the reducers behind `report`.

mod config;
mod mnist;
mod output;
mod report;
mod scenarios;

pub use config::{
    apply_override, AlgorithmConfig, DataConfig, ExperimentConfig, LearnabilityConfig, ParticipationConfig,
    PopulationConfig, QRule, Scenario, Schedule, SweepConfig,
};
pub use mnist::{load_mnist_idx, read_idx_images, read_idx_labels};
pub use output::{parse_records_csv, read_json, read_records_csv, records_to_csv, write_json, CsvRow, CSV_HEADER};
pub use report::{reduce_rows, report, Check, Report};
pub use scenarios::{
    load_mnist, mlp_population, mnist_population, pac_study, positively_related_study, quadratic_population,
    rate_fits, rate_metric, run_experiment, safari_config, sweep_cells, synthetic_client_data, CellAggregate,
    CellParams, CellReference, CellSummary, ExperimentOutput, ImpossibilitySummary, Manifest, MnistData,
    PacSummary, PositivelyRelatedSummary, RateFit, RunDiagnostics, RunEntry,
};
pub use crate::stats::{fit_loglog_slope, LogLogFit};
