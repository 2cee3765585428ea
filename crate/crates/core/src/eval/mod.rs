//! Transductive evaluation: every method trains on LP ∪ U and is scored on U.
//!
//! [`metrics`] holds the counting routines, [`threshold`] turns scores into
//! decisions, [`report`] assembles and serializes per-run results, and
//! [`experiment`] / [`sweep`] drive whole runs.

pub mod experiment;
pub mod metrics;
pub mod report;
pub mod sweep;
pub mod threshold;

pub use experiment::{
    config_hash, evaluate, run_experiment, score_u, train_method, u_truth, Bm25Spec, MethodSpec,
    TrainedModel, TrainingTrace,
};
pub use metrics::{f1, pct_cutoff, precision_recall_at_pct, rank, Confusion, Prf};
pub use report::{Bm25SweepSummary, DocRecord, RunInfo, ScoreReport, Summary};
pub use sweep::{
    default_ratio_grid, label_ratio_sweep, lp_count_for, nested_task, write_sweep_csv, SweepRow,
};
pub use threshold::ThresholdPolicy;

use crate::baselines::BaselineError;
use crate::data::DataError;
use crate::ebm::EbmError;
use crate::kde::KdeError;
use std::path::PathBuf;

/// Failure inside one of the scoring methods.
#[derive(Debug, thiserror::Error)]
pub enum MethodError {
    #[error(transparent)]
    Kde(#[from] KdeError),
    #[error(transparent)]
    Ebm(#[from] EbmError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("length mismatch: expected {expected}, got {got}")]
    Length { expected: usize, got: usize },
    #[error("percentage {0} outside (0, 100]")]
    Percent(f64),
    #[error("empty ranking")]
    EmptyRanking,
    #[error("score for {0:?} is NaN")]
    NonFiniteScore(String),
    #[error("no ground truth for unlabelled document {0:?}")]
    UnknownTruth(String),
    #[error("threshold policy: {0}")]
    Policy(String),
    #[error("{stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: MethodError,
    },
    #[error("model file: {0}")]
    Model(String),
    #[error("report: {0}")]
    Report(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl EvalError {
    pub(crate) fn stage(stage: &'static str) -> impl Fn(MethodError) -> EvalError {
        move |source| EvalError::Stage { stage, source }
    }

    pub(crate) fn io(path: &std::path::Path) -> impl Fn(std::io::Error) -> EvalError + '_ {
        move |source| EvalError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
