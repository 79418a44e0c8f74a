//! Dense tensors and a tape-based reverse-mode differentiator.

mod params;
mod tape;
mod tensor;

pub mod gradcheck;

pub use params::{ParamId, ParamStore};
pub use tape::{Activation, Elementwise, Gradients, ParamGrad, Tape, Var};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
