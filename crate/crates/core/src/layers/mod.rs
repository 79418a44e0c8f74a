//! Parameterized building blocks. Each layer only holds [`ParamId`] handles;
//! the values live in the model's [`ParamStore`].
//!
//! [`ParamId`]: crate::autodiff::ParamId
//! [`ParamStore`]: crate::autodiff::ParamStore

mod cnn;
mod dense;
mod embedding;
mod init;
mod lstm;

pub use cnn::{CnnActivation, CnnEncoder};
pub use dense::DenseLayer;
pub use embedding::EmbeddingTable;
pub use init::{glorot_range, LayerBuilder};
pub use lstm::{sequence_rows, BlstmEncoder, LstmCell};
