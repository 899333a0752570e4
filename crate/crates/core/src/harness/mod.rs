//! Experiment configuration, dataset ingestion, the replication driver and
//! output writers.

pub mod config;
pub mod experiment;
pub mod io;

pub use config::{ExperimentConfig, NoiseScale, SamplerSettings, OUTPUT_DIR_ENV};
pub use experiment::{fit_dataset, fit_model, run_experiment, run_experiment_in, run_replication, ExperimentReport, FitOutcome, Simulator};
pub use io::{emit_surface, emit_surface_mapped, emit_tables, fmt_sig6, ingest_csv, write_samples, AffineRescale, ExternalDataset};
