//! The role-based contextual model.
//!
//! History turns are summarized into `v_his` (semantic intent vectors or CNN
//! sentence encodings fed through a BLSTM, one BLSTM per speaker role when
//! role-split, summed). A dense projection of `v_his` conditions the
//! current-utterance BLSTM, whose output `v_cur` feeds sigmoid heads for
//! language understanding and for the guide's next action.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ParamStore, Tape, Var};
use crate::corpus::{PretrainedEmbeddings, Role};
use crate::error::{Error, Result};
use crate::layers::{BlstmEncoder, CnnEncoder, DenseLayer, EmbeddingTable, LayerBuilder};
use crate::model::example::{Example, HistoryInput, Payload};
use crate::model::{CurrentInput, HistoryInjection, HistoryMode, ModelConfig};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HistoryEncoder {
    Pooled(BlstmEncoder),
    RoleSplit { tourist: BlstmEncoder, guide: BlstmEncoder },
}

impl HistoryEncoder {
    pub fn for_role(&self, role: Role) -> &BlstmEncoder {
        match self {
            HistoryEncoder::Pooled(b) => b,
            HistoryEncoder::RoleSplit { tourist, guide } => match role {
                Role::Tourist => tourist,
                Role::Guide => guide,
            },
        }
    }
}

/// Values recorded by one forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub v_his: Option<Var>,
    pub sentence_encodings: Vec<Var>,
    pub v_cur: Var,
    pub lu: Option<Var>,
    pub policy: Option<Var>,
}

#[derive(Debug, Clone, Copy)]
pub struct LossTerms<S> {
    pub total: Var,
    pub task: S,
    pub guidance: S,
}

/// Output probabilities for one example.
#[derive(Debug, Clone, PartialEq)]
pub struct Probabilities<S> {
    pub lu: Option<Vec<S>>,
    pub policy: Option<Vec<S>>,
}

#[derive(Debug, Clone)]
pub struct DialogueModel<S> {
    config: ModelConfig,
    vocab_size: usize,
    label_count: usize,
    params: ParamStore<S>,
    embedding: EmbeddingTable,
    cnn: Option<CnnEncoder>,
    history: Option<HistoryEncoder>,
    history_proj: Option<DenseLayer>,
    current: BlstmEncoder,
    lu_head: Option<DenseLayer>,
    policy_head: Option<DenseLayer>,
    guidance_head: Option<DenseLayer>,
}

/// `{k : o_k > threshold}`; may be empty.
pub fn predict_labels<S: Scalar>(probs: &[S], threshold: f64) -> Vec<usize> {
    let t = S::of(threshold);
    probs
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > t)
        .map(|(k, _)| k)
        .collect()
}

impl<S: Scalar> DialogueModel<S> {
    pub fn new(config: ModelConfig, vocab_size: usize, label_count: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if vocab_size < 2 || label_count == 0 {
            return Err(Error::Precondition(format!(
                "model needs a vocabulary (got {vocab_size}) and labels (got {label_count})"
            )));
        }
        let h = config.hidden_dim;
        let mut params = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = LayerBuilder::new(&mut params, &mut rng);

        let embedding = b.embedding("embedding", vocab_size, config.embedding_dim, config.train_embeddings)?;
        let cnn = match config.history_mode {
            HistoryMode::NaturalLanguage => Some(b.cnn(
                "cnn",
                config.embedding_dim,
                &config.cnn_widths,
                config.cnn_filters,
                config.cnn_activation,
            )?),
            _ => None,
        };
        let history_input = match config.history_mode {
            HistoryMode::None => 0,
            HistoryMode::Semantic => label_count,
            HistoryMode::NaturalLanguage => config.cnn_output_dim(),
        };
        let history = match (config.history_mode, config.role_split) {
            (HistoryMode::None, _) => None,
            (_, false) => Some(HistoryEncoder::Pooled(b.blstm("history", history_input, h)?)),
            (_, true) => Some(HistoryEncoder::RoleSplit {
                tourist: b.blstm("history.tourist", history_input, h)?,
                guide: b.blstm("history.guide", history_input, h)?,
            }),
        };
        let history_proj = match history {
            Some(_) => Some(b.dense("history_proj", 2 * h, h)?),
            None => None,
        };
        let mut current_input = match config.current_input {
            CurrentInput::Words => config.embedding_dim,
            CurrentInput::GoldIntents => label_count,
        };
        if history.is_some() && config.injection == HistoryInjection::ConcatInput {
            current_input += h;
        }
        let current = b.blstm("current", current_input, h)?;
        let lu_head = match config.task.has_lu() {
            true => Some(b.dense("lu_head", 2 * h, label_count)?),
            false => None,
        };
        let policy_head = match config.task.has_policy() {
            true => Some(b.dense("policy_head", 2 * h, label_count)?),
            false => None,
        };
        let guidance_head = match config.intermediate_guidance {
            true => Some(b.dense("guidance_head", config.cnn_output_dim(), label_count)?),
            false => None,
        };
        Ok(DialogueModel {
            config,
            vocab_size,
            label_count,
            params,
            embedding,
            cnn,
            history,
            history_proj,
            current,
            lu_head,
            policy_head,
            guidance_head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Only the decision threshold may change after construction.
    pub fn set_threshold(&mut self, threshold: f64) -> Result<()> {
        let candidate = ModelConfig { threshold, ..self.config.clone() };
        candidate.validate()?;
        self.config = candidate;
        Ok(())
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn label_count(&self) -> usize {
        self.label_count
    }

    pub fn params(&self) -> &ParamStore<S> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<S> {
        &mut self.params
    }

    pub fn history_encoder(&self) -> Option<&HistoryEncoder> {
        self.history.as_ref()
    }

    pub fn cnn(&self) -> Option<&CnnEncoder> {
        self.cnn.as_ref()
    }

    pub fn embedding(&self) -> &EmbeddingTable {
        &self.embedding
    }

    pub fn current_encoder(&self) -> &BlstmEncoder {
        &self.current
    }

    pub fn install_embeddings(&mut self, pretrained: &PretrainedEmbeddings) -> Result<()> {
        let t = self.params.get(self.embedding.table);
        if pretrained.values.len() != t.len() || pretrained.dim != self.embedding.dim {
            return Err(Error::Dimension {
                op: "install_embeddings",
                lhs: t.shape().to_vec(),
                rhs: vec![pretrained.values.len() / pretrained.dim.max(1), pretrained.dim],
            });
        }
        let values = pretrained.values.iter().map(|&x| S::of(x)).collect();
        self.params.set_values("embedding", values)
    }

    fn summary_dim(&self) -> usize {
        2 * self.config.hidden_dim
    }

    /// Sum over roles of each role's BLSTM summary (or one pooled BLSTM);
    /// an empty sequence contributes the zero vector.
    fn summarize(&self, tape: &mut Tape<'_, S>, items: &[(Role, Var)]) -> Result<Var> {
        let encoder = self
            .history
            .as_ref()
            .ok_or_else(|| Error::Contract("model has no history encoder".into()))?;
        match encoder {
            HistoryEncoder::Pooled(b) => {
                if items.is_empty() {
                    return Ok(tape.zeros(vec![self.summary_dim()]));
                }
                let steps: Vec<Var> = items.iter().map(|&(_, v)| v).collect();
                b.encode_steps(tape, &steps, None, None)
            }
            HistoryEncoder::RoleSplit { .. } => {
                let mut total: Option<Var> = None;
                for role in Role::ALL {
                    let steps: Vec<Var> = items.iter().filter(|(r, _)| *r == role).map(|&(_, v)| v).collect();
                    if steps.is_empty() {
                        continue;
                    }
                    let s = encoder.for_role(role).encode_steps(tape, &steps, None, None)?;
                    total = Some(match total {
                        Some(t) => tape.add(t, s)?,
                        None => s,
                    });
                }
                Ok(total.unwrap_or_else(|| tape.zeros(vec![self.summary_dim()])))
            }
        }
    }

    pub fn encode_history_semantic(&self, tape: &mut Tape<'_, S>, history: &HistoryInput<S>) -> Result<Var> {
        let mut items = Vec::with_capacity(history.len());
        for (role, payload) in history {
            let Payload::Intents(v) = payload else {
                return Err(Error::Contract("semantic history needs intent vectors".into()));
            };
            if v.len() != self.label_count {
                return Err(Error::Dimension { op: "semantic history", lhs: vec![v.len()], rhs: vec![self.label_count] });
            }
            items.push((*role, tape.constant(vec![v.len()], v.clone())?));
        }
        self.summarize(tape, &items)
    }

    pub fn encode_sentence(&self, tape: &mut Tape<'_, S>, tokens: &[usize]) -> Result<Var> {
        let cnn = self
            .cnn
            .as_ref()
            .ok_or_else(|| Error::Contract("model has no sentence encoder".into()))?;
        let ids: &[usize] = if tokens.is_empty() { &[0] } else { tokens };
        let embedded = self.embedding.embed(tape, ids)?;
        cnn.encode(tape, embedded)
    }

    /// Returns `v_his` and the per-utterance sentence encodings. Every
    /// utterance goes through the same CNN parameters.
    pub fn encode_history_nl(&self, tape: &mut Tape<'_, S>, history: &HistoryInput<S>) -> Result<(Var, Vec<Var>)> {
        let mut items = Vec::with_capacity(history.len());
        for (role, payload) in history {
            let Payload::Tokens(tokens) = payload else {
                return Err(Error::Contract("natural-language history needs token sequences".into()));
            };
            items.push((*role, self.encode_sentence(tape, tokens)?));
        }
        let v_his = self.summarize(tape, &items)?;
        Ok((v_his, items.into_iter().map(|(_, v)| v).collect()))
    }

    fn history_input(&self, ex: &Example) -> HistoryInput<S> {
        match self.config.history_mode {
            HistoryMode::None => Vec::new(),
            HistoryMode::Semantic => ex.semantic_history(self.label_count),
            HistoryMode::NaturalLanguage => ex.nl_history(),
        }
    }

    pub fn encode_history(&self, tape: &mut Tape<'_, S>, history: &HistoryInput<S>) -> Result<(Option<Var>, Vec<Var>)> {
        match self.config.history_mode {
            HistoryMode::None => Ok((None, Vec::new())),
            HistoryMode::Semantic => Ok((Some(self.encode_history_semantic(tape, history)?), Vec::new())),
            HistoryMode::NaturalLanguage => {
                let (v, enc) = self.encode_history_nl(tape, history)?;
                Ok((Some(v), enc))
            }
        }
    }

    /// `v_cur = BLSTM(x, W_his v_his)`.
    pub fn encode_current(
        &self,
        tape: &mut Tape<'_, S>,
        tokens: &[usize],
        intents: &[usize],
        v_his: Option<Var>,
    ) -> Result<Var> {
        let mut steps = match self.config.current_input {
            CurrentInput::Words => {
                if tokens.is_empty() {
                    return Err(Error::Precondition("current utterance is empty".into()));
                }
                let embedded = self.embedding.embed(tape, tokens)?;
                crate::layers::sequence_rows(tape, embedded)?
            }
            CurrentInput::GoldIntents => {
                let mut v = vec![S::zero(); self.label_count];
                for &i in intents {
                    v[i] = S::one();
                }
                vec![tape.constant(vec![self.label_count], v)?]
            }
        };
        let projected = match (v_his, &self.history_proj) {
            (Some(v), Some(proj)) => Some(proj.forward(tape, v)?),
            _ => None,
        };
        let h0 = match (projected, self.config.injection) {
            (Some(p), HistoryInjection::ConcatInput) => {
                for s in steps.iter_mut() {
                    *s = tape.concat(&[*s, p], 0)?;
                }
                None
            }
            (p, _) => p,
        };
        self.current.encode_steps(tape, &steps, h0, h0)
    }

    fn head(&self, tape: &mut Tape<'_, S>, head: Option<&DenseLayer>, v_cur: Var, what: &str) -> Result<Var> {
        let head = head.ok_or_else(|| Error::Contract(format!("model has no {what} head")))?;
        let logits = head.forward(tape, v_cur)?;
        Ok(tape.sigmoid(logits))
    }

    pub fn lu_output(&self, tape: &mut Tape<'_, S>, v_cur: Var) -> Result<Var> {
        self.head(tape, self.lu_head.as_ref(), v_cur, "language-understanding")
    }

    pub fn policy_output(&self, tape: &mut Tape<'_, S>, v_cur: Var) -> Result<Var> {
        self.head(tape, self.policy_head.as_ref(), v_cur, "policy")
    }

    pub fn forward_lu(&self, tape: &mut Tape<'_, S>, tokens: &[usize], v_his: Option<Var>) -> Result<Var> {
        let v_cur = self.encode_current(tape, tokens, &[], v_his)?;
        self.lu_output(tape, v_cur)
    }

    pub fn forward_policy(&self, tape: &mut Tape<'_, S>, tokens: &[usize], v_his: Option<Var>) -> Result<Var> {
        let v_cur = self.encode_current(tape, tokens, &[], v_his)?;
        self.policy_output(tape, v_cur)
    }

    /// Full pass for one example; the current utterance is encoded once and
    /// shared by every head.
    pub fn forward(&self, tape: &mut Tape<'_, S>, ex: &Example) -> Result<Forward> {
        let history = self.history_input(ex);
        let (v_his, sentence_encodings) = self.encode_history(tape, &history)?;
        let v_cur = self.encode_current(tape, &ex.tokens, &ex.intents, v_his)?;
        let lu = match self.lu_head {
            Some(_) => Some(self.lu_output(tape, v_cur)?),
            None => None,
        };
        let policy = match self.policy_head {
            Some(_) => Some(self.policy_output(tape, v_cur)?),
            None => None,
        };
        Ok(Forward { v_his, sentence_encodings, v_cur, lu, policy })
    }

    /// Summed cross-entropy of each history sentence encoding, through the
    /// guidance head, against that utterance's gold intents.
    pub fn guidance_loss(&self, tape: &mut Tape<'_, S>, encodings: &[Var], gold: &[&[usize]]) -> Result<Var> {
        let head = self
            .guidance_head
            .as_ref()
            .ok_or_else(|| Error::Contract("intermediate guidance is disabled".into()))?;
        if encodings.len() != gold.len() {
            return Err(Error::Contract(format!(
                "guidance needs gold intents for all {} history utterances, got {}",
                encodings.len(),
                gold.len()
            )));
        }
        let mut total = tape.zeros(vec![1]);
        let eps = S::of(self.config.prob_eps);
        for (&enc, ids) in encodings.iter().zip(gold) {
            let logits = head.forward(tape, enc)?;
            let probs = tape.sigmoid(logits);
            let target = self.multi_hot(ids)?;
            let l = tape.bce(probs, &target, eps)?;
            total = tape.add(total, l)?;
        }
        Ok(total)
    }

    fn multi_hot(&self, ids: &[usize]) -> Result<Vec<S>> {
        let mut v = vec![S::zero(); self.label_count];
        for &i in ids {
            *v.get_mut(i).ok_or(Error::Index { what: "label vocabulary", index: i, size: self.label_count })? = S::one();
        }
        Ok(v)
    }

    /// Training objective for one example: task cross-entropy plus the
    /// guidance sum when enabled.
    pub fn loss(&self, tape: &mut Tape<'_, S>, ex: &Example) -> Result<LossTerms<S>> {
        let fwd = self.forward(tape, ex)?;
        let eps = S::of(self.config.prob_eps);
        let mut task: Option<Var> = None;
        if let Some(o) = fwd.lu {
            task = Some(tape.bce(o, &self.multi_hot(&ex.intents)?, eps)?);
        }
        if let Some(o) = fwd.policy {
            match &ex.policy_target {
                Some(target) => {
                    let l = tape.bce(o, &self.multi_hot(target)?, eps)?;
                    task = Some(match task {
                        Some(t) => tape.add(t, l)?,
                        None => l,
                    });
                }
                None if !self.config.task.has_lu() => {
                    return Err(Error::Contract("policy example without a guide reply".into()));
                }
                None => {}
            }
        }
        let task = task.ok_or_else(|| Error::Contract("model has no output head".into()))?;
        let task_value = tape.value(task)[0];
        if self.guidance_head.is_none() {
            return Ok(LossTerms { total: task, task: task_value, guidance: S::zero() });
        }
        let gold: Vec<&[usize]> = ex.history.iter().map(|h| h.intents.as_slice()).collect();
        let guidance = self.guidance_loss(tape, &fwd.sentence_encodings, &gold)?;
        let guidance_value = tape.value(guidance)[0];
        let total = tape.add(task, guidance)?;
        Ok(LossTerms { total, task: task_value, guidance: guidance_value })
    }

    /// Inference pass; never touches gold history labels.
    pub fn probabilities(&self, ex: &Example) -> Result<Probabilities<S>> {
        let mut tape = Tape::new(&self.params);
        let fwd = self.forward(&mut tape, ex)?;
        Ok(Probabilities {
            lu: fwd.lu.map(|v| tape.value(v).to_vec()),
            policy: fwd.policy.map(|v| tape.value(v).to_vec()),
        })
    }
}
