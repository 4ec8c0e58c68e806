//! Minimal dense-tensor engine with reverse-mode gradients.
//!
//! Values live on a [`Tape`]; every primitive op records enough to run its
//! vector-Jacobian product later. The op set is exactly what the attention
//! models, APPNP and PPRGo need: dense and sparse products, column concat,
//! row gathers, segment softmax and segment weighted sums, pointwise
//! activations, dropout and the two losses.

mod adam;
mod segment;
mod sparse;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use segment::SegmentIndex;
pub use sparse::CsrMatrix;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("tensor of shape {rows}x{cols} cannot hold {len} values")]
    DataLength { rows: usize, cols: usize, len: usize },
    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("{0} needs at least one input")]
    EmptyInput(&'static str),
    #[error("segment group {0} is empty")]
    EmptyGroup(usize),
    #[error("element {element} refers to group {group}, only {num_groups} groups exist")]
    SegmentOutOfRange {
        element: usize,
        group: usize,
        num_groups: usize,
    },
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("loss mask is empty")]
    EmptyMask,
    #[error("label at position {0} is not 0/1")]
    NonBinaryLabel(usize),
    #[error("dropout rate {0} outside [0, 1)")]
    RateOutOfRange(f64),
    #[error("backward already ran on this tape")]
    AlreadyBackward,
    #[error("backward needs a 1x1 loss, got {0:?}")]
    NotScalar((usize, usize)),
    #[error("malformed sparse matrix")]
    MalformedSparse,
}
