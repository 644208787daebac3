//! Experiment harness: runs seed sweeps of the factorization benchmarks,
//! persists scenes and traces, and builds comparison tables.

use std::path::{Path, PathBuf};

pub mod experiment;
pub mod report;
pub mod runner;
pub mod scene_io;

pub use experiment::{ExperimentSpec, OutputFormat, ProblemKind};
pub use report::{compare_dir, emit_comparison, read_summaries, read_trace_losses, write_trace, Comparison};
pub use runner::{generate_scene, run_experiment, run_on_scene, run_seed, ExperimentReport, RunOutcome, RunSummary};
pub use scene_io::{load_scene, save_scene, Scene};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("field '{field}': {message}")]
    SceneFormat { field: String, message: String },
    #[error("field '{field}': length mismatch, expected {expected} got {got}")]
    LengthMismatch { field: String, expected: usize, got: usize },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Solver(#[from] adaprox::Error),
}

impl BenchError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        BenchError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
