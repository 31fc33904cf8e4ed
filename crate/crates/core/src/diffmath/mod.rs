//! Dense tensors, reverse-mode differentiation and the Adam updater.
//!
//! All storage is row-major `f64`. A [`Tape`] is rebuilt for every forward
//! pass; values that persist across steps live in [`Parameter`]s.

mod adam;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState, Parameter};
pub use tape::{cross_entropy_value, sigmoid, softmax, ElementwiseFn, Tape, Var};
pub use tensor::Tensor;
