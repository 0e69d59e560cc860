//! Encoder-decoder translation model whose encoder carries a latent
//! dependency-tree attention layer, together with its training loop and
//! checkpoint format.

use thiserror::Error;
use treeattn_core::{MatrixTreeError, TensorError};

pub mod checkpoint;
pub mod config;
pub mod decoder;
pub mod encoder;
pub mod model;
pub mod nn;
pub mod params;
pub mod train;

pub use checkpoint::Checkpoint;
pub use config::{AttentionMode, DecoderMode, ModelConfig, ModelMode};
pub use decoder::StepTrace;
pub use encoder::EncoderOutput;
pub use model::{ForcedPass, Model, Translation};
pub use params::ParamStore;
pub use train::{perplexity, TrainConfig, TrainOutcome, TrainState, Trainer};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    MatrixTree(#[from] MatrixTreeError),
    #[error("non-finite loss on batch {batch} (max |phi| = {max_abs_phi:e})")]
    NonFiniteLoss { batch: usize, max_abs_phi: f64 },
    #[error("batch {batch}: {source}")]
    AtBatch {
        batch: usize,
        #[source]
        source: Box<ModelError>,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint was trained as '{checkpoint}' but '{requested}' was requested")]
    ModeMismatch { checkpoint: ModelMode, requested: ModelMode },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ModelError {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        match self {
            ModelError::Tensor(_) | ModelError::MatrixTree(_) | ModelError::NonFiniteLoss { .. } => true,
            ModelError::AtBatch { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}
