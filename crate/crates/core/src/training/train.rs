use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::corpus::LabelVocab;
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::model::{DialogueModel, Example, Task};
use crate::scalar::Scalar;
use crate::training::{clip_global_norm, AdamConfig, AdamState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub shuffle: bool,
    /// Stop after [`EARLY_STOP_PATIENCE`] epochs without dev improvement.
    pub early_stop: bool,
    pub adam: AdamConfig,
    pub clip_norm: Option<f64>,
    /// Pad every utterance in a batch to the batch's longest one instead of
    /// encoding each at its own length.
    pub batch_padding: bool,
    /// Evaluate the dev set after every epoch.
    pub eval_dev: bool,
    /// Stop as soon as the dev F1 reaches this value.
    pub target_f1: Option<f64>,
}

pub const EARLY_STOP_PATIENCE: usize = 3;

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 128,
            epochs: 30,
            seed: 0,
            shuffle: true,
            early_stop: false,
            adam: AdamConfig::default(),
            clip_norm: Some(5.0),
            batch_padding: false,
            eval_dev: true,
            target_f1: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Precondition("batch_size and epochs must be at least 1".into()));
        }
        if !(self.adam.lr > 0.0) {
            return Err(Error::Precondition("learning rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean total objective per example over the epoch.
    pub train_loss: f64,
    /// Mean guidance term per example (zero without guidance).
    pub guidance_loss: f64,
    pub dev_lu_f1: Option<f64>,
    pub dev_policy_f1: Option<f64>,
}

impl EpochRecord {
    /// `epoch \t train_loss \t dev_LU_F1 \t dev_policy_F1`, `NA` when absent.
    pub fn log_line(&self) -> String {
        let f = |x: Option<f64>| x.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"));
        format!("{}\t{:.6}\t{}\t{}", self.epoch, self.train_loss, f(self.dev_lu_f1), f(self.dev_policy_f1))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
}

impl TrainReport {
    pub fn log(&self) -> String {
        self.epochs.iter().map(|e| e.log_line() + "\n").collect()
    }
}

/// Examples a model of this task can learn from.
pub fn task_examples(task: Task, examples: &[Example]) -> Vec<Example> {
    examples
        .iter()
        .filter(|e| task != Task::Policy || e.policy_target.is_some())
        .cloned()
        .collect()
}

fn pad_batch(batch: &mut [Example]) {
    let longest = batch
        .iter()
        .flat_map(|e| std::iter::once(e.tokens.len()).chain(e.history.iter().map(|h| h.tokens.len())))
        .max()
        .unwrap_or(0);
    for e in batch {
        e.tokens.resize(longest, 0);
        for h in &mut e.history {
            h.tokens.resize(longest, 0);
        }
    }
}

/// Mini-batch Adam over `train`, one tape per example, batch loss averaged.
pub fn train<S: Scalar>(
    model: &mut DialogueModel<S>,
    train: &[Example],
    dev: &[Example],
    labels: &LabelVocab,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainReport> {
    config.validate()?;
    let task = model.config().task;
    let train = task_examples(task, train);
    if train.is_empty() {
        return Err(Error::Contract("training set is empty".into()));
    }
    let mut adam = AdamState::new(model.params(), config.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut report = TrainReport::default();
    let mut best_dev = f64::NEG_INFINITY;
    let mut stale = 0;

    for epoch in 1..=config.epochs {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let (mut loss_sum, mut guidance_sum) = (0.0, 0.0);
        for chunk in order.chunks(config.batch_size) {
            let mut batch: Vec<Example> = chunk.iter().map(|&i| train[i].clone()).collect();
            if config.batch_padding {
                pad_batch(&mut batch);
            }
            let scale = S::one() / S::of(batch.len() as f64);
            model.params_mut().zero_grads();
            for ex in &batch {
                let (grads, terms) = {
                    let mut tape = Tape::new(model.params());
                    let terms = model.loss(&mut tape, ex)?;
                    let value = tape.value(terms.total)[0];
                    (tape.backward(terms.total)?, (value, terms.guidance))
                };
                loss_sum += terms.0.to_f64_lossy();
                guidance_sum += terms.1.to_f64_lossy();
                grads.accumulate_into(model.params_mut(), scale);
            }
            if let Some(max) = config.clip_norm {
                clip_global_norm(model.params_mut(), max);
            }
            adam.step(model.params_mut())?;
        }
        let n = train.len() as f64;
        let (dev_lu_f1, dev_policy_f1) = if config.eval_dev && !dev.is_empty() {
            let r = evaluate(model, dev, labels, model.config().threshold)?;
            (r.lu_f1, r.policy_f1)
        } else {
            (None, None)
        };
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / n,
            guidance_loss: guidance_sum / n,
            dev_lu_f1,
            dev_policy_f1,
        };
        if !record.train_loss.is_finite() {
            return Err(Error::Contract(format!("training loss diverged at epoch {epoch}")));
        }
        on_epoch(&record);
        report.epochs.push(record);
        let dev_score = dev_lu_f1.or(dev_policy_f1);
        if config.target_f1.is_some_and(|t| dev_score.is_some_and(|f| f >= t)) {
            break;
        }

        if config.early_stop {
            let dev_score = dev_score.unwrap_or(f64::NEG_INFINITY);
            if dev_score > best_dev {
                best_dev = dev_score;
                stale = 0;
            } else {
                stale += 1;
                if stale >= EARLY_STOP_PATIENCE {
                    break;
                }
            }
        }
    }
    model.params_mut().zero_grads();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic, SplitSpec, SynthSpec};
    use crate::experiment::prepare;
    use crate::model::{HistoryMode, HistoryWindow, ModelConfig};

    fn setup(mode: HistoryMode) -> (crate::experiment::Prepared, ModelConfig) {
        let c = generate_synthetic(&SynthSpec { sessions: 12, seed: 4, ..SynthSpec::default() }).unwrap();
        let data = prepare(&c.dialogues, &SplitSpec::default(), HistoryWindow::Last(5)).unwrap();
        let config = ModelConfig {
            history_mode: mode,
            role_split: mode != HistoryMode::None,
            hidden_dim: 6,
            embedding_dim: 6,
            cnn_filters: 4,
            ..ModelConfig::default()
        };
        (data, config)
    }

    fn quick(epochs: usize) -> TrainConfig {
        TrainConfig { epochs, batch_size: 8, adam: AdamConfig { lr: 0.01, ..AdamConfig::default() }, ..TrainConfig::default() }
    }

    #[test]
    fn loss_decreases_over_thirty_epochs() {
        let (data, config) = setup(HistoryMode::NaturalLanguage);
        let mut m = DialogueModel::<f64>::new(config, data.tokens.len(), data.labels.len(), 0).unwrap();
        let r = train(&mut m, &data.train, &data.dev, &data.labels, &quick(30), |_| {}).unwrap();
        assert_eq!(r.epochs.len(), 30);
        assert!(r.epochs[29].train_loss < r.epochs[0].train_loss);
    }

    #[test]
    fn same_seed_same_log() {
        let (data, config) = setup(HistoryMode::Semantic);
        let go = || {
            let mut m = DialogueModel::<f64>::new(config.clone(), data.tokens.len(), data.labels.len(), 3).unwrap();
            train(&mut m, &data.train, &data.dev, &data.labels, &quick(3), |_| {}).unwrap().log()
        };
        assert_eq!(go(), go());
    }

    #[test]
    fn empty_training_set_is_contract_error() {
        let (data, config) = setup(HistoryMode::None);
        let mut m = DialogueModel::<f64>::new(config, data.tokens.len(), data.labels.len(), 0).unwrap();
        let err = train(&mut m, &[], &data.dev, &data.labels, &quick(1), |_| {}).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn batch_loss_value_ignores_order() {
        let (data, config) = setup(HistoryMode::NaturalLanguage);
        let m = DialogueModel::<f64>::new(config, data.tokens.len(), data.labels.len(), 1).unwrap();
        let loss = |idx: &mut dyn Iterator<Item = usize>| -> f64 {
            let v: Vec<f64> = idx
                .map(|i| {
                    let mut tape = Tape::new(m.params());
                    let t = m.loss(&mut tape, &data.train[i]).unwrap();
                    tape.value(t.total)[0]
                })
                .collect();
            v.iter().sum()
        };
        let n = data.train.len().min(10);
        let (a, b) = (loss(&mut (0..n)), loss(&mut (0..n).rev()));
        assert!((a - b).abs() <= 1e-12 * a.abs());
    }

    #[test]
    fn log_line_format() {
        let e = EpochRecord { epoch: 2, train_loss: 1.5, guidance_loss: 0.0, dev_lu_f1: Some(0.25), dev_policy_f1: None };
        assert_eq!(e.log_line(), "2\t1.500000\t0.250000\tNA");
    }

    #[test]
    fn policy_training_skips_turns_without_reply() {
        let (data, config) = setup(HistoryMode::None);
        let kept = task_examples(Task::Policy, &data.train);
        assert!(kept.len() < data.train.len());
        assert!(kept.iter().all(|e| e.policy_target.is_some()));
        let mut m = DialogueModel::<f64>::new(ModelConfig { task: Task::Policy, ..config }, data.tokens.len(), data.labels.len(), 0).unwrap();
        assert!(train(&mut m, &data.train, &data.dev, &data.labels, &quick(1), |_| {}).is_ok());
    }
}
