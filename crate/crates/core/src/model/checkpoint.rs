//! Versioned binary checkpoints.
//!
//! ```text
//! magic "RNRCKPT\0"     8 bytes
//! version               u32
//! header length         u32, then that many bytes of JSON (config, hyperparameters, epoch)
//! tensor count          u32
//! per tensor            name length u32, UTF-8 name, rank u32, rank × u32 dims, f32 values (row-major)
//! ```
//!
//! All integers and floats are little-endian. Raw weights are stored under
//! their parameter names, the EMA shadow under the same names prefixed with
//! [`EMA_PREFIX`].

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Hyperparams, ModelConfig, ModelParams};
use crate::autodiff::{ParamStore, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"RNRCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const EMA_PREFIX: &str = "ema/";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] io::Error),
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("checkpoint is missing tensor {0}")]
    Missing(String),
    #[error("tensor {name} has shape {found:?}, model expects {expected:?}")]
    Shape { name: String, expected: [usize; 2], found: [usize; 2] },
    #[error("checkpoint has unexpected tensor {0}")]
    Unexpected(String),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: ModelConfig,
    hyper: Hyperparams,
    epoch: usize,
}

/// Model weights plus the metadata needed to rebuild and resume.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub hyper: Hyperparams,
    /// Number of completed epochs.
    pub epoch: usize,
    pub params: ModelParams,
    pub ema: Option<ParamStore>,
}

impl Checkpoint {
    /// Weights to use at inference time: the EMA shadow when present.
    pub fn inference_params(&self) -> ModelParams {
        match &self.ema {
            Some(ema) => self.params.with_store(ema.clone()),
            None => self.params.clone(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&Header {
            config: self.params.config,
            hyper: self.hyper.clone(),
            epoch: self.epoch,
        })
        .expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);

        let mut tensors: Vec<(String, &Tensor)> =
            self.params.store.iter().map(|(_, n, t)| (n.to_string(), t)).collect();
        if let Some(ema) = &self.ema {
            tensors.extend(ema.iter().map(|(_, n, t)| (format!("{EMA_PREFIX}{n}"), t)));
        }
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, t) in tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&2u32.to_le_bytes());
            out.extend_from_slice(&(t.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(t.cols() as u32).to_le_bytes());
            for &x in t.data() {
                out.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Cursor { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(CheckpointError::Format("not a checkpoint file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version { found: version, expected: CHECKPOINT_VERSION });
        }
        let len = r.u32()? as usize;
        let header: Header = serde_json::from_slice(r.take(len)?)?;

        let count = r.u32()? as usize;
        let mut found: HashMap<String, Tensor> = HashMap::with_capacity(count);
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| CheckpointError::Format("tensor name is not UTF-8".into()))?
                .to_string();
            let rank = r.u32()? as usize;
            let dims: Vec<usize> = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<_, _>>()?;
            let (rows, cols) = match dims[..] {
                [] => (1, 1),
                [n] => (n, 1),
                [a, b] => (a, b),
                _ => return Err(CheckpointError::Format(format!("tensor {name} has rank {rank}"))),
            };
            let n = rows
                .checked_mul(cols)
                .ok_or_else(|| CheckpointError::Format(format!("tensor {name} is too large")))?;
            let raw = r.take(n.saturating_mul(4))?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect();
            if found.insert(name.clone(), Tensor::from_vec(rows, cols, data)).is_some() {
                return Err(CheckpointError::Format(format!("tensor {name} appears twice")));
            }
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::Format("trailing bytes".into()));
        }

        let mut params = ModelParams::new(header.config, 0);
        fill(&mut params.store, &mut found, "")?;
        let has_ema = found.keys().any(|k| k.starts_with(EMA_PREFIX));
        let ema = if has_ema {
            let mut store = params.store.clone();
            fill(&mut store, &mut found, EMA_PREFIX)?;
            Some(store)
        } else {
            None
        };
        if let Some(name) = found.into_keys().min() {
            return Err(CheckpointError::Unexpected(name));
        }
        Ok(Checkpoint { hyper: header.hyper, epoch: header.epoch, params, ema })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn fill(store: &mut ParamStore, found: &mut HashMap<String, Tensor>, prefix: &str) -> Result<(), CheckpointError> {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let name = format!("{prefix}{}", store.name(id));
        let t = found.remove(&name).ok_or_else(|| CheckpointError::Missing(name.clone()))?;
        let expected = store.get(id).shape();
        if t.shape() != expected {
            return Err(CheckpointError::Shape { name, expected, found: t.shape() });
        }
        *store.get_mut(id) = t;
    }
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| CheckpointError::Format("truncated checkpoint".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
