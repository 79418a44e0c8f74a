//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"SPKDLG1"
//! u32 header length, header JSON (config, vocabularies, metadata)
//! u32 parameter count
//! per parameter: u32 name length, UTF-8 name, u32 rank, rank x u64 dims,
//!                prod(dims) x f64 values
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{LabelVocab, SplitSpec, TokenVocab};
use crate::error::{Error, Result};
use crate::model::{DialogueModel, ModelConfig};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 7] = b"SPKDLG1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub split: SplitSpec,
    pub seed: u64,
    pub corpus_hash: String,
}

#[derive(Debug, Clone)]
pub struct Checkpoint<S> {
    pub model: DialogueModel<S>,
    pub tokens: TokenVocab,
    pub labels: LabelVocab,
    pub meta: CheckpointMeta,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    tokens: TokenVocab,
    labels: LabelVocab,
    meta: CheckpointMeta,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| corrupt("truncated file"))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

impl<S: Scalar> Checkpoint<S> {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&Header {
            config: self.model.config().clone(),
            tokens: self.tokens.clone(),
            labels: self.labels.clone(),
            meta: self.meta.clone(),
        })?;
        let params = self.model.params();
        let mut out = Vec::with_capacity(16 + header.len() + params.num_scalars() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(params.len() as u32).to_le_bytes());
        for (_, name, t) in params.iter() {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in t.values() {
                out.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(MAGIC.len()).ok() != Some(MAGIC.as_slice()) {
            return Err(corrupt("missing SPKDLG1 magic header"));
        }
        let header_len = r.u32()? as usize;
        let header: Header = serde_json::from_slice(r.take(header_len)?)?;
        let mut model = DialogueModel::new(header.config, header.tokens.len(), header.labels.len(), 0)?;
        let count = r.u32()? as usize;
        if count != model.params().len() {
            return Err(corrupt(format!(
                "expected {} parameters for this configuration, found {count}",
                model.params().len()
            )));
        }
        let mut seen = vec![false; count];
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| corrupt("parameter name is not UTF-8"))?
                .to_string();
            let rank = r.u32()? as usize;
            let dims = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let id = model
                .params()
                .id(&name)
                .ok_or_else(|| corrupt(format!("unexpected parameter `{name}`")))?;
            if model.params().get(id).shape() != dims.as_slice() {
                return Err(corrupt(format!("shape mismatch for `{name}`: {dims:?}")));
            }
            let n: usize = dims.iter().product();
            let values = (0..n).map(|_| r.f64().map(S::of)).collect::<Result<Vec<_>>>()?;
            model.params_mut().set_values(&name, values)?;
            seen[id.index()] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(corrupt("duplicate parameter entries"));
        }
        if r.pos != buf.len() {
            return Err(corrupt("trailing bytes after parameters"));
        }
        Ok(Checkpoint { model, tokens: header.tokens, labels: header.labels, meta: header.meta })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
