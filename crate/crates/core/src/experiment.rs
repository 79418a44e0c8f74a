//! One configured run: split, vocabularies, training and test scoring.

use crate::corpus::{Dialogue, LabelVocab, PretrainedEmbeddings, SessionSplit, SplitSpec, TokenVocab};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport};
use crate::model::{build_examples, DialogueModel, Example, HistoryWindow, ModelConfig};
use crate::scalar::Scalar;
use crate::training::{train, EpochRecord, TrainConfig, TrainReport};

/// Examples for each partition plus the vocabularies built from training
/// sessions. Labels are collected from the whole corpus so that every head
/// can name every act; tokens come from training sessions only.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub split: SessionSplit,
    pub tokens: TokenVocab,
    pub labels: LabelVocab,
    pub train: Vec<Example>,
    pub dev: Vec<Example>,
    pub test: Vec<Example>,
}

pub fn prepare(dialogues: &[Dialogue], split: &SplitSpec, window: HistoryWindow) -> Result<Prepared> {
    if dialogues.is_empty() {
        return Err(Error::Contract("corpus has no sessions".into()));
    }
    let parts = split.split(dialogues.len());
    let train_d = SessionSplit::select(dialogues, &parts.train);
    let tokens = TokenVocab::build(train_d.iter().copied(), 1);
    let labels = LabelVocab::build(dialogues);
    let build = |ids: &[usize]| build_examples(SessionSplit::select(dialogues, ids), &tokens, &labels, window);
    Ok(Prepared {
        train: build(&parts.train),
        dev: build(&parts.dev),
        test: build(&parts.test),
        split: parts,
        tokens,
        labels,
    })
}

#[derive(Debug, Clone)]
pub struct Outcome<S> {
    pub model: DialogueModel<S>,
    pub report: TrainReport,
    pub dev: EvalReport,
    pub test: EvalReport,
}

/// Trains a fresh model with `seed` and scores dev and test at the model's
/// threshold.
pub fn run<S: Scalar>(
    data: &Prepared,
    config: &ModelConfig,
    train_config: &TrainConfig,
    seed: u64,
    embeddings: Option<&PretrainedEmbeddings>,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<Outcome<S>> {
    let mut model = DialogueModel::<S>::new(config.clone(), data.tokens.len(), data.labels.len(), seed)?;
    if let Some(e) = embeddings {
        model.install_embeddings(e)?;
    }
    let tc = TrainConfig { seed, ..train_config.clone() };
    let report = train(&mut model, &data.train, &data.dev, &data.labels, &tc, on_epoch)?;
    let threshold = model.config().threshold;
    let dev = evaluate(&model, &data.dev, &data.labels, threshold)?;
    let test = evaluate(&model, &data.test, &data.labels, threshold)?;
    Ok(Outcome { model, report, dev, test })
}
