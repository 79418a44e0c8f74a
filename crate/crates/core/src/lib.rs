//! Role-aware contextual models for multi-turn dialogue: language
//! understanding of tourist turns and prediction of the guide's next acts.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix the precision for callers that do not care.

pub mod autodiff;
pub mod cli;
pub mod corpus;
pub mod diagnostics;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod layers;
pub mod model;
pub mod scalar;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor64 = autodiff::Tensor<f64>;
pub type Tensor32 = autodiff::Tensor<f32>;
pub type Tape64<'p> = autodiff::Tape<'p, f64>;
pub type Tape32<'p> = autodiff::Tape<'p, f32>;
pub type ParamStore64 = autodiff::ParamStore<f64>;
pub type Model64 = model::DialogueModel<f64>;
pub type Model32 = model::DialogueModel<f32>;
pub type Checkpoint64 = model::checkpoint::Checkpoint<f64>;
