//! A small dense-network engine in 64-bit floating point: fully connected
//! chains with leaky ReLU and optional batch normalization, reverse-mode
//! gradients, Adam, and a VAE used to shrink embeddings before KDE.

pub mod adam;
pub mod checkpoint;
pub mod net;
pub mod vae;

pub use adam::{adam_step, adam_step_net, AdamConfig, AdamState};
pub use net::{
    Activation, BatchNorm, DenseNet, ForwardCache, Gradients, Layer, Mode, NetSpec, LEAKY_SLOPE,
};
pub use vae::{kl_standard_normal, train_vae, VaeConfig, VaeEpoch, VaeModel};

#[derive(Debug, thiserror::Error)]
pub enum NeuralError {
    #[error("input has {got} columns, net expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("batch normalization in train mode needs at least 2 rows, got {0}")]
    BatchTooSmall(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}
