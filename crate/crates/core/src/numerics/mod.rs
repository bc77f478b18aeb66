//! Dense 2-D tensors, a reverse-mode gradient tape, AdamW, and a
//! finite-difference gradient checker.

mod gradcheck;
mod optim;
mod params;
mod tape;
mod tensor;

use alloc::string::String;

pub use gradcheck::grad_check;
pub use optim::{adamw_step, AdamW, OptState};
pub use params::ParamStore;
pub use tape::{clamp_prob, elu, log_sum_exp, sigmoid, Gradients, Tape, Var, PROB_EPS};
pub use tensor::Tensor2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NumericsError {
    #[error("data length {len} does not match shape {rows}x{cols}")]
    DataLength { rows: usize, cols: usize, len: usize },
    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("loss must be 1x1, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("row {row} has no unmasked entries")]
    EmptyRow { row: usize },
    #[error("{0}: empty input")]
    Empty(&'static str),
    #[error("invalid hyper-parameter: {0}")]
    InvalidHyperParameter(&'static str),
}

impl NumericsError {
    pub(crate) fn shape(op: &'static str, lhs: (usize, usize), rhs: (usize, usize)) -> Self {
        Self::Shape { op, lhs, rhs }
    }
}
