use crate::autodiff::{ParamId, Tape, Var};
use crate::error::Result;
use crate::scalar::Scalar;

/// Token lookup table. Row 0 is the padding row: zero and never updated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbeddingTable {
    pub table: ParamId,
    pub vocab_size: usize,
    pub dim: usize,
    pub trainable: bool,
}

impl EmbeddingTable {
    pub fn embed<S: Scalar>(&self, tape: &mut Tape<'_, S>, ids: &[usize]) -> Result<Var> {
        tape.embed(self.table, ids, self.trainable, true)
    }
}
