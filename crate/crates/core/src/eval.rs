//! Per-utterance F1 and evaluation over example sets.

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::corpus::LabelVocab;
use crate::error::{Error, Result};
use crate::model::{predict_labels, DialogueModel, Example, Probabilities};
use crate::scalar::Scalar;

/// Environment variable capping evaluation threads.
pub const THREADS_ENV: &str = "SPKDLG_THREADS";

/// F1 of one predicted label set against the gold set. Two empty sets score
/// 1.0; exactly one empty set scores 0.0.
pub fn utterance_f1<T: Ord>(predicted: &BTreeSet<T>, gold: &BTreeSet<T>) -> f64 {
    match (predicted.is_empty(), gold.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let hit = predicted.intersection(gold).count() as f64;
    if hit == 0.0 {
        return 0.0;
    }
    let precision = hit / predicted.len() as f64;
    let recall = hit / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Arithmetic mean of per-utterance scores.
pub fn corpus_f1(scores: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Contract("F1 over an empty evaluation set".into()));
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n: &usize| n > 0)
}

/// Output probabilities for every example, in input order.
pub fn predict_all<S: Scalar>(model: &DialogueModel<S>, examples: &[Example]) -> Result<Vec<Probabilities<S>>> {
    let run = || examples.par_iter().map(|ex| model.probabilities(ex)).collect();
    match thread_cap() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Precondition(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    Lu,
    Policy,
}

/// Predicted label set and gold set for each example the head applies to.
pub fn label_sets<S: Scalar>(
    head: Head,
    examples: &[Example],
    probs: &[Probabilities<S>],
    labels: &LabelVocab,
    threshold: f64,
) -> Vec<(usize, BTreeSet<String>, BTreeSet<String>)> {
    examples
        .iter()
        .zip(probs)
        .enumerate()
        .filter_map(|(i, (ex, p))| {
            let (o, gold) = match head {
                Head::Lu => (p.lu.as_ref()?, ex.lu_gold.clone()),
                Head::Policy => (p.policy.as_ref()?, ex.policy_gold.clone()?),
            };
            Some((i, labels.decode(predict_labels(o, threshold)), gold))
        })
        .collect()
}

pub fn head_f1<S: Scalar>(
    head: Head,
    examples: &[Example],
    probs: &[Probabilities<S>],
    labels: &LabelVocab,
    threshold: f64,
) -> Option<f64> {
    let scores: Vec<f64> = label_sets(head, examples, probs, labels, threshold)
        .iter()
        .map(|(_, p, g)| utterance_f1(p, g))
        .collect();
    corpus_f1(&scores).ok()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub examples: usize,
    pub lu_f1: Option<f64>,
    pub policy_f1: Option<f64>,
}

pub fn evaluate<S: Scalar>(
    model: &DialogueModel<S>,
    examples: &[Example],
    labels: &LabelVocab,
    threshold: f64,
) -> Result<EvalReport> {
    let probs = predict_all(model, examples)?;
    Ok(EvalReport {
        examples: examples.len(),
        lu_f1: head_f1(Head::Lu, examples, &probs, labels, threshold),
        policy_f1: head_f1(Head::Policy, examples, &probs, labels, threshold),
    })
}

/// Candidate thresholds searched by [`tune_threshold`]; includes 0.5.
pub fn threshold_grid() -> Vec<f64> {
    (1..20).map(|i| i as f64 * 0.05).collect()
}

/// Picks the grid threshold with the best mean F1 over the model's heads;
/// ties go to the candidate nearest the default 0.5.
pub fn tune_threshold<S: Scalar>(
    model: &DialogueModel<S>,
    examples: &[Example],
    labels: &LabelVocab,
) -> Result<(f64, f64)> {
    let probs = predict_all(model, examples)?;
    let score = |t: f64| {
        let parts: Vec<f64> = [Head::Lu, Head::Policy]
            .into_iter()
            .filter_map(|h| head_f1(h, examples, &probs, labels, t))
            .collect();
        corpus_f1(&parts).ok()
    };
    let mut best: Option<(f64, f64)> = None;
    for t in threshold_grid() {
        let Some(f) = score(t) else { continue };
        let better = match best {
            None => true,
            Some((bt, bf)) => f > bf || (f == bf && (t - 0.5).abs() < (bt - 0.5).abs()),
        };
        if better {
            best = Some((t, f));
        }
    }
    best.ok_or_else(|| Error::Contract("threshold tuning over an empty evaluation set".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn half_overlap() {
        assert_eq!(utterance_f1(&set(&["A", "B"]), &set(&["B", "C"])), 0.5);
    }

    #[test]
    fn conventions() {
        assert_eq!(utterance_f1(&set(&["A"]), &set(&["A"])), 1.0);
        assert_eq!(utterance_f1(&set(&[]), &set(&["A"])), 0.0);
        assert_eq!(utterance_f1(&set(&["A"]), &set(&[])), 0.0);
        assert_eq!(utterance_f1(&set(&[]), &set(&[])), 1.0);
    }

    #[test]
    fn corpus_mean() {
        assert_eq!(corpus_f1(&[1.0, 0.0]).unwrap(), 0.5);
        assert_eq!(corpus_f1(&[1.0; 4]).unwrap(), 1.0);
        assert!(corpus_f1(&[]).is_err());
    }

    #[test]
    fn grid_contains_default() {
        assert!(threshold_grid().iter().any(|&t| (t - 0.5).abs() < 1e-12));
    }
}
