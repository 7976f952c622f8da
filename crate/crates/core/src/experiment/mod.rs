//! Experiment orchestration: configuration, dataset ingestion, the
//! staged runner, ablation sweeps, and result export.

pub mod config;
pub mod dataset;
pub mod results;
pub mod runner;
pub mod sweep;

pub use config::{ExperimentConfig, PartialConfig, RunMode, SeedSet};
pub use dataset::{ingest_dataset, Dataset, IngestReport};
pub use results::{
    ablation_table_text, read_records_jsonl, records_table_text, write_ablation_jsonl,
    write_ablation_table, write_records_jsonl, write_records_table,
};
pub use runner::{
    read_record, records_numerically_equal, replay, run_experiment, ChecksumReport,
    PrivacyReport, RunRecord, RunStatus, StageMark, RECORD_SCHEMA,
};
pub use sweep::{
    ablation_sweep, default_grid, repeat_seeds, AblationResult, SweepCell, SweepParameter,
    SweepValue,
};
