//! Whitespace-separated text embeddings (`word v1 v2 ... vD` per line).

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::TokenVocab;
use crate::error::{Error, Result};
use crate::layers::glorot_range;

/// Initial embedding rows for a vocabulary, `vocab.len() x dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainedEmbeddings {
    pub dim: usize,
    pub values: Vec<f64>,
    /// Vocabulary indices whose row came from the file.
    pub hits: Vec<usize>,
    pub hit_rate: f64,
}

pub fn read_embeddings(
    reader: impl BufRead,
    vocab: &TokenVocab,
    dim: usize,
    seed: u64,
) -> Result<PretrainedEmbeddings> {
    let n = vocab.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let range = glorot_range(n, dim);
    let mut values: Vec<f64> = (0..n * dim).map(|_| rng.gen_range(-range..=range)).collect();
    values[..dim].fill(0.0);
    let mut found = vec![false; n];

    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io("<embeddings>", e))?;
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else { continue };
        let row: Vec<f64> = fields
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format { line: line_no, message: e.to_string() })?;
        if row.len() != dim {
            return Err(Error::Format {
                line: line_no,
                message: format!("expected {dim} values for `{word}`, found {}", row.len()),
            });
        }
        if row.iter().any(|x| !x.is_finite()) {
            return Err(Error::Format { line: line_no, message: "non-finite value".into() });
        }
        if let Some(id) = vocab.get(word) {
            if id == TokenVocab::PAD {
                continue;
            }
            values[id * dim..(id + 1) * dim].copy_from_slice(&row);
            found[id] = true;
        }
    }
    let hits: Vec<usize> = (0..n).filter(|&i| found[i]).collect();
    let content = n.saturating_sub(2).max(1);
    Ok(PretrainedEmbeddings {
        dim,
        hit_rate: hits.len() as f64 / content as f64,
        hits,
        values,
    })
}

pub fn load_embeddings(
    path: impl AsRef<Path>,
    vocab: &TokenVocab,
    dim: usize,
    seed: u64,
) -> Result<PretrainedEmbeddings> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(BufReader::new(file), vocab, dim, seed)
}
