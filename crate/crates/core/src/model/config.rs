use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::CnnActivation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistoryMode {
    None,
    Semantic,
    NaturalLanguage,
}

/// Which head(s) the model carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Intents of the current tourist utterance.
    Lu,
    /// Labels of the guide's next turn.
    Policy,
    /// Shared encoder with both heads and summed losses.
    Joint,
}

impl Task {
    pub fn has_lu(self) -> bool {
        matches!(self, Task::Lu | Task::Joint)
    }

    pub fn has_policy(self) -> bool {
        matches!(self, Task::Policy | Task::Joint)
    }
}

/// How the projected history summary reaches the current-utterance encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistoryInjection {
    /// Initial hidden state of both directions.
    InitialState,
    /// Appended to every timestep input.
    ConcatInput,
}

/// What the current-utterance encoder reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurrentInput {
    Words,
    /// The current turn's gold intent vector as a one-step sequence.
    GoldIntents,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistoryWindow {
    Last(usize),
    All,
}

impl HistoryWindow {
    pub fn limit(self) -> usize {
        match self {
            HistoryWindow::Last(n) => n,
            HistoryWindow::All => usize::MAX,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub history_mode: HistoryMode,
    pub role_split: bool,
    pub intermediate_guidance: bool,
    pub history_window: HistoryWindow,
    pub threshold: f64,
    pub hidden_dim: usize,
    pub embedding_dim: usize,
    pub cnn_widths: Vec<usize>,
    pub cnn_filters: usize,
    pub cnn_activation: CnnActivation,
    pub task: Task,
    pub injection: HistoryInjection,
    pub current_input: CurrentInput,
    pub train_embeddings: bool,
    /// Probability clipping used by every cross-entropy term.
    pub prob_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            history_mode: HistoryMode::None,
            role_split: false,
            intermediate_guidance: false,
            history_window: HistoryWindow::Last(5),
            threshold: 0.5,
            hidden_dim: 128,
            embedding_dim: 200,
            cnn_widths: vec![2, 3, 4],
            cnn_filters: 128,
            cnn_activation: CnnActivation::Relu,
            task: Task::Lu,
            injection: HistoryInjection::InitialState,
            current_input: CurrentInput::Words,
            train_embeddings: true,
            prob_eps: 1e-7,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Precondition(format!("model config: {m}")));
        if self.intermediate_guidance && self.history_mode != HistoryMode::NaturalLanguage {
            return fail("intermediate guidance requires natural-language history");
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return fail("threshold must lie in (0, 1)");
        }
        if self.role_split && self.history_mode == HistoryMode::None {
            return fail("role split requires a history mode");
        }
        if self.hidden_dim == 0 || self.embedding_dim == 0 {
            return fail("dimensions must be positive");
        }
        if self.history_mode == HistoryMode::NaturalLanguage
            && (self.cnn_widths.is_empty() || self.cnn_widths.contains(&0) || self.cnn_filters == 0)
        {
            return fail("CNN needs positive widths and filters");
        }
        if self.history_window == HistoryWindow::Last(0) && self.history_mode != HistoryMode::None {
            return fail("history window must be positive");
        }
        if !(self.prob_eps > 0.0 && self.prob_eps < 0.5) {
            return fail("prob_eps must lie in (0, 0.5)");
        }
        Ok(())
    }

    pub fn cnn_output_dim(&self) -> usize {
        self.cnn_filters * self.cnn_widths.len()
    }
}
