//! Experiment runner: configuration, the training loop, metrics files and
//! encoder comparison tables.

mod config;
mod dump;
mod report;
mod run;

use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::autodiff::ModelError;
use crate::data::DataError;
use crate::encoders::EncodeError;

pub use config::{ArchKind, ArchSection, DatasetConfig, EncoderSection, TrainConfig};
pub use dump::{parse_spike_dump, read_spike_dump, spike_dump_bytes, write_spike_dump};
pub use report::{
    compare_encoders, comparison_csv, emit_comparison_csv, emit_csv, emit_markdown, final_val, finish_table,
    metrics_csv, parse_metrics_csv, rank_values, read_csv, render_markdown, ComparisonRow, ComparisonTable, Rank,
    COMPARISON_HEADER, METRICS_HEADER,
};
pub use run::{
    build_network, load_dataset, load_splits, run_experiment, run_experiment_with_stats, MetricsRecord, Phase, RunStats,
};

/// Environment variable naming the directory relative dataset paths are
/// resolved against.
pub const DATA_DIR_ENV: &str = "TBSNN_DATA_DIR";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {reason}", path.display())]
    Csv { path: PathBuf, reason: String },
    #[error("{}: bad spike dump: {reason}", path.display())]
    Dump { path: PathBuf, reason: String },
    #[error("no {0} to write")]
    Empty(&'static str),
    #[error("loss became non-finite in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
