//! Experiment configs, presets, result tables and the cached pipeline.

pub mod config;
pub mod experiments;
pub mod pipeline;
pub mod run;
pub mod table;

pub use config::{ExperimentConfig, Preset, ReferenceChoice, ReferenceConfig, SamplerConfig};
pub use experiments::{run_estimator_scatter, run_mse_beta_scan, run_preset, run_rescaling_sweep, ExperimentOutput};
pub use pipeline::{run_full_pipeline, FileEntry, Manifest, SeedEntry, StageState, StageStatus};
pub use table::{aggregate, read_result_rows, write_csv, CsvTable, CurveRow, EstimateRow, QuartileRow, Quartiles, ResultRow, ScatterRow};
