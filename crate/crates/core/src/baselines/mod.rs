//! Comparison methods: BM25 query-by-documents and the prior-dependent
//! nnPU classifier.

pub mod bm25;
pub mod nnpu;

pub use bm25::{
    bm25_f1_sweep, bm25_rank, query_from_docs, Bm25Index, Bm25Params, SweepPoint, SweepResult,
};
pub use nnpu::{
    nnpu_risk, train_nnpu, train_nnpu_arrays, NnpuConfig, NnpuEpoch, NnpuModel, NnpuRisk,
};

use crate::data::DataError;
use crate::neural::NeuralError;

#[derive(Debug, thiserror::Error)]
pub enum BaselineError {
    #[error("no tokens for document {0:?}")]
    MissingTokens(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("empty positive or unlabelled set")]
    Empty,
    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("csv: {0}")]
    Csv(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}
