//! Dense reverse-mode differentiation over a fixed menu of MLP layers, plus Adam.
//!
//! A [`forward`] pass records a [`Tape`] of primitives (matmul, add-bias,
//! activations, dropout masks, concat) with their cached activations.
//! [`backward`] walks it in reverse and returns parameter gradients together
//! with the gradient at the network input, which is what a discriminator hands
//! back to the generator.

mod adam;
mod params;
mod tape;
mod tensor;

pub use adam::Adam;
pub use params::{Gradients, Param, ParamStore};
pub use tape::{backward, forward, Arch, DropoutSpec, Layer, Tape};
pub(crate) use tape::sigmoid;
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AutodiffError {
    #[error("dimension mismatch at {layer}: expected {expected}, got {actual}")]
    Dimension {
        layer: String,
        expected: String,
        actual: String,
    },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("missing parameter {0}")]
    MissingParam(String),
    #[error("dropout rate {0} outside [0, 1)")]
    InvalidRate(f64),
    #[error("weight file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
