//! Small double-precision neural toolkit: a multi-width text CNN with
//! max-over-time pooling, dense layers, sigmoid outputs, binary
//! cross-entropy, exact backward passes, Adam and a finite-difference
//! gradient checker.

mod adam;
mod checkpoint;
mod gradcheck;
mod loss;
mod net;
mod params;
mod spec;

use thiserror::Error;

pub use adam::{adam_step, adam_step_except, AdamConfig, AdamState};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CheckpointHeader, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, loss_at, DEFAULT_STEP};
pub use loss::{bce_logit_grad, bce_loss, PROB_CLAMP};
pub use net::{dot, ConvOutput, ForwardCache, TextCnn};
pub use params::{GradSet, ParamSet, Tensor};
pub use spec::{Activation, ConvSpec, DenseSpec, NetSpec};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("numeric error: non-finite value in {0}")]
    Numeric(&'static str),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("invalid network spec: {0}")]
    Spec(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
