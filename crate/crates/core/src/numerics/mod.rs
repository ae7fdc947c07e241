//! Dense tensors, a recording tape for reverse-mode gradients, the layers
//! used by the sentence encoders, losses, and Adam.

mod adam;
pub mod gradcheck;
mod graph;
mod lstm;
mod ops;
mod params;
mod scalar;
mod tensor;

pub use adam::AdamState;
pub use graph::{Tape, Var};
pub use lstm::{lstm_forward, lstm_layer, lstm_param_names, LstmShape};
pub use ops::{bce_loss, causal_conv1d, dense, dropout, mse_loss, relu, sigmoid, Mode, BCE_EPS};
pub use params::{Gradients, ParamSet};
pub use scalar::Scalar;
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NumericsError {
    #[error("dimension error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("invalid label: {0}")]
    Label(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("optimizer state error: {0}")]
    State(String),
}

impl NumericsError {
    pub(crate) fn shape(op: &'static str, detail: String) -> Self {
        NumericsError::Shape { op, detail }
    }
}
