//! Reverse-mode differentiation on a dynamic tape, Adam, and checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
mod ops;
pub mod params;
mod tensor;

pub use adam::{lr_schedule, AdamState};
pub use params::{Bound, ParamId, ParamSet, Precision};
pub use tensor::{AdError, BackwardFn, Gradients, Result, Tape, Tensor};
pub use ops::{sigmoid, softplus};
