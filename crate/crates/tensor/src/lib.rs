//! Dense tensors with a tape-based reverse-mode autodiff engine.
//!
//! The op set is deliberately small: exactly what the fusion segmentation
//! networks need (convolution, pooling, bilinear resizing, channel
//! attention, concatenation and the two training losses).

pub mod checkpoint;
mod error;
pub mod gradcheck;
pub mod op_cases;
mod ops;
mod params;
mod real;
mod tape;
mod tensor;

pub use error::{Result, TensorError};
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use ops::loss::IGNORE_LABEL;
pub use params::{kaiming_uniform, Graph, ParamId, ParamStore, Sgd};
pub use real::Real;
pub use tape::{Gradients, OpKind, Tape, Var};
pub use tensor::Tensor;
