use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::Dialogue;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Token string to index map; index 0 is padding, 1 is unknown.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct TokenVocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl TokenVocab {
    pub const PAD: usize = 0;
    pub const UNK: usize = 1;
    pub const PAD_TOKEN: &'static str = "<pad>";
    pub const UNK_TOKEN: &'static str = "<unk>";

    pub fn from_tokens(words: impl IntoIterator<Item = String>) -> Self {
        let mut tokens = vec![Self::PAD_TOKEN.to_string(), Self::UNK_TOKEN.to_string()];
        tokens.extend(words.into_iter().filter(|w| w != Self::PAD_TOKEN && w != Self::UNK_TOKEN));
        let mut vocab = TokenVocab { tokens: Vec::new(), index: HashMap::new() };
        for t in tokens {
            if !vocab.index.contains_key(&t) {
                vocab.index.insert(t.clone(), vocab.tokens.len());
                vocab.tokens.push(t);
            }
        }
        vocab
    }

    /// Tokens seen at least `min_freq` times, in lexicographic order.
    pub fn build<'a>(dialogues: impl IntoIterator<Item = &'a Dialogue>, min_freq: usize) -> Self {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for d in dialogues {
            for t in &d.turns {
                for tok in &t.tokens {
                    *counts.entry(tok.as_str()).or_default() += 1;
                }
            }
        }
        Self::from_tokens(
            counts
                .into_iter()
                .filter(|&(_, c)| c >= min_freq.max(1))
                .map(|(t, _)| t.to_string()),
        )
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens
            .iter()
            .map(|t| self.get(t).unwrap_or(Self::UNK))
            .collect()
    }
}

impl From<Vec<String>> for TokenVocab {
    fn from(tokens: Vec<String>) -> Self {
        Self::from_tokens(tokens)
    }
}

impl From<TokenVocab> for Vec<String> {
    fn from(v: TokenVocab) -> Self {
        v.tokens
    }
}

/// Bijection between intent/action label strings and output indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelVocab {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelVocab {
    pub fn from_labels(labels: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            if index.insert(l.clone(), i).is_some() {
                return Err(Error::Contract(format!("duplicate label `{l}`")));
            }
        }
        Ok(LabelVocab { labels, index })
    }

    /// All labels on any turn, sorted.
    pub fn build<'a>(dialogues: impl IntoIterator<Item = &'a Dialogue>) -> Self {
        let set: BTreeSet<&str> = dialogues
            .into_iter()
            .flat_map(|d| d.turns.iter())
            .flat_map(|t| t.intents.iter().map(String::as_str))
            .collect();
        Self::from_labels(set.into_iter().map(str::to_string).collect())
            .expect("set yields unique labels")
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn label(&self, id: usize) -> Option<&str> {
        self.labels.get(id).map(String::as_str)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Known label indices of `set`, ascending; unknown labels are dropped.
    pub fn indices<'a>(&self, set: impl IntoIterator<Item = &'a String>) -> Vec<usize> {
        let mut ids: Vec<usize> = set.into_iter().filter_map(|l| self.get(l)).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn multi_hot<S: Scalar>(&self, ids: &[usize]) -> Vec<S> {
        let mut v = vec![S::zero(); self.len()];
        for &i in ids {
            v[i] = S::one();
        }
        v
    }

    pub fn decode(&self, ids: impl IntoIterator<Item = usize>) -> BTreeSet<String> {
        ids.into_iter()
            .filter_map(|i| self.label(i).map(str::to_string))
            .collect()
    }
}

impl TryFrom<Vec<String>> for LabelVocab {
    type Error = Error;

    fn try_from(labels: Vec<String>) -> Result<Self> {
        Self::from_labels(labels)
    }
}

impl From<LabelVocab> for Vec<String> {
    fn from(v: LabelVocab) -> Self {
        v.labels
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Role, Turn};
    use proptest::prelude::*;

    fn dlg(texts: &[(&str, &[&str])]) -> Dialogue {
        Dialogue {
            session_id: "s".into(),
            turns: texts
                .iter()
                .map(|(t, l)| Turn::new(Role::Tourist, *t, l.iter().map(|s| s.to_string())))
                .collect(),
        }
    }

    #[test]
    fn reserved_indices() {
        let v = TokenVocab::build([&dlg(&[("b a a", &[])])], 1);
        assert_eq!(v.get("<pad>"), Some(0));
        assert_eq!(v.get("<unk>"), Some(1));
        assert_eq!(v.get("a"), Some(2));
        assert_eq!(v.encode(&["zzz".into(), "b".into()]), [1, 3]);
    }

    #[test]
    fn min_frequency_cutoff() {
        let v = TokenVocab::build([&dlg(&[("b a a", &[])])], 2);
        assert_eq!(v.len(), 3);
        assert_eq!(v.get("b"), None);
    }

    #[test]
    fn train_only_vocabulary() {
        let train = dlg(&[("hello there", &[])]);
        let dev = dlg(&[("unseen words", &[])]);
        let v = TokenVocab::build([&train], 1);
        assert!(v.get("unseen").is_none());
        assert!(dev.turns[0].tokens.iter().all(|t| v.get(t).is_none()));
    }

    #[test]
    fn duplicate_labels_rejected() {
        assert!(LabelVocab::from_labels(vec!["A".into(), "A".into()]).is_err());
    }

    proptest! {
        #[test]
        fn multi_hot_round_trip(mask in proptest::collection::vec(any::<bool>(), 6)) {
            let labels: Vec<String> = (0..6).map(|i| format!("ACT_{i}")).collect();
            let vocab = LabelVocab::from_labels(labels.clone()).unwrap();
            let set: BTreeSet<String> = labels.iter().zip(&mask).filter(|(_, &m)| m).map(|(l, _)| l.clone()).collect();
            let hot: Vec<f64> = vocab.multi_hot(&vocab.indices(&set));
            let back = vocab.decode(hot.iter().enumerate().filter(|(_, &x)| x == 1.0).map(|(i, _)| i));
            prop_assert_eq!(back, set);
        }
    }
}
