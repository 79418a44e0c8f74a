//! Role-based contextual model assembly.

pub mod checkpoint;
mod config;
mod example;
mod network;

pub use config::{CurrentInput, HistoryInjection, HistoryMode, HistoryWindow, ModelConfig, Task};
pub use example::{build_examples, Example, HistoryInput, HistoryTurn, Payload};
pub use network::{predict_labels, DialogueModel, Forward, HistoryEncoder, LossTerms, Probabilities};
