use std::collections::BTreeSet;

use crate::corpus::{Dialogue, LabelVocab, Role, TokenVocab};
use crate::model::HistoryWindow;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryTurn {
    pub role: Role,
    pub tokens: Vec<usize>,
    /// Known gold label indices.
    pub intents: Vec<usize>,
}

/// One tourist turn prepared for the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub session: usize,
    pub turn: usize,
    pub tokens: Vec<usize>,
    pub intents: Vec<usize>,
    /// Gold label strings, including labels outside the vocabulary.
    pub lu_gold: BTreeSet<String>,
    /// Label indices of the guide's reply, when the next turn is a guide turn.
    pub policy_target: Option<Vec<usize>>,
    pub policy_gold: Option<BTreeSet<String>>,
    /// Preceding turns in chronological order, at most the window.
    pub history: Vec<HistoryTurn>,
}

/// History payload handed to the contextual encoders.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload<S> {
    Intents(Vec<S>),
    Tokens(Vec<usize>),
}

/// Chronological `(role, payload)` list.
pub type HistoryInput<S> = Vec<(Role, Payload<S>)>;

impl Example {
    pub fn semantic_history<S: Scalar>(&self, labels: usize) -> HistoryInput<S> {
        self.history
            .iter()
            .map(|h| {
                let mut v = vec![S::zero(); labels];
                for &i in &h.intents {
                    v[i] = S::one();
                }
                (h.role, Payload::Intents(v))
            })
            .collect()
    }

    pub fn nl_history<S>(&self) -> HistoryInput<S> {
        self.history
            .iter()
            .map(|h| (h.role, Payload::Tokens(h.tokens.clone())))
            .collect()
    }
}

/// Builds one example per tourist turn that has at least one token.
pub fn build_examples<'a>(
    dialogues: impl IntoIterator<Item = &'a Dialogue>,
    tokens: &TokenVocab,
    labels: &LabelVocab,
    window: HistoryWindow,
) -> Vec<Example> {
    let limit = window.limit();
    let mut out = Vec::new();
    for (s, d) in dialogues.into_iter().enumerate() {
        let encoded: Vec<HistoryTurn> = d
            .turns
            .iter()
            .map(|t| HistoryTurn {
                role: t.speaker,
                tokens: tokens.encode(&t.tokens),
                intents: labels.indices(&t.intents),
            })
            .collect();
        for (i, turn) in d.turns.iter().enumerate() {
            if turn.speaker != Role::Tourist || turn.tokens.is_empty() {
                continue;
            }
            let next = d.turns.get(i + 1).filter(|n| n.speaker == Role::Guide);
            let start = i.saturating_sub(limit);
            out.push(Example {
                session: s,
                turn: i,
                tokens: encoded[i].tokens.clone(),
                intents: encoded[i].intents.clone(),
                lu_gold: turn.intents.clone(),
                policy_target: next.map(|n| labels.indices(&n.intents)),
                policy_gold: next.map(|n| n.intents.clone()),
                history: encoded[start..i].to_vec(),
            });
        }
    }
    out
}
