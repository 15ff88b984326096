//! Dense arrays, reverse-mode differentiation, layers and Adam.

mod array;
mod checkpoint;
mod gradcheck;
mod layers;
mod store;
mod tape;

pub use array::{Array, Precision, Real};
pub use checkpoint::{load_checkpoint, CHECKPOINT_VERSION, save_checkpoint, Checkpoint, CheckpointEntry, CheckpointManifest, EntryKind};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use layers::{layer_norm, linear, mlp_forward, register_layer_norm, Mlp};
pub use store::{AdamConfig, Init, ParameterStore};
pub use tape::{softmax_rows, Gradients, SparseRows, Tape, Var};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("{op}: shape mismatch {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("loss must be scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("non-finite gradient for parameter '{0}'")]
    NonFinite(String),
    #[error("unknown parameter '{0}'")]
    UnknownParameter(String),
    #[error("parameter '{0}' already exists")]
    DuplicateParameter(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl NumericsError {
    pub fn shape(op: &'static str, detail: String) -> Self {
        NumericsError::Shape { op, detail }
    }
}
