//! Dialogue data: records, tokenization, vocabularies, embeddings and the
//! synthetic generator.

pub mod dstc4;
pub mod embeddings;
pub mod io;
mod split;
pub mod synth;
mod tokenize;
mod types;
mod vocab;

pub use embeddings::{load_embeddings, read_embeddings, PretrainedEmbeddings};
pub use io::{load_corpus, parse_corpus, save_corpus, write_corpus};
pub use split::{SessionSplit, SplitSpec};
pub use synth::{generate_synthetic, SynthCorpus, SynthSpec, SynthTables};
pub use tokenize::tokenize;
pub use types::{Dialogue, Role, Turn};
pub use vocab::{LabelVocab, TokenVocab};
