//! Neural-network primitives with explicit forward and backward passes.

mod activation;
mod batchnorm;
mod dense;
pub mod gradcheck;
pub mod init;
mod matrix;

pub use activation::{relu_backward, relu_forward, sigmoid, sigmoid_backward, sigmoid_forward, softplus};
pub use batchnorm::{BatchNormLayer, BnCache, BnGrads, BnMode, DEFAULT_EPSILON, DEFAULT_MOMENTUM};
pub use dense::{DenseCache, DenseGrads, DenseLayer};
pub(crate) use dense::dot;
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport, ParamAccess};
pub use init::{InitKind, InitPolicy};
pub use matrix::Matrix;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: String, found: String },
    #[error("batch error: {0}")]
    Batch(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}
