//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! 8 bytes   magic "CVAECKPT"
//! u32       format version (1)
//! u64       manifest length L
//! L bytes   manifest, UTF-8 JSON (CheckpointManifest)
//! u32       tensor count T (10)
//! T times:  u16 name length, name bytes, u64 rows, u64 cols,
//!           rows·cols f64 values, row-major
//! u8        1 if optimizer state follows, else 0
//! T times:  u64 step, len f64 first moments, len f64 second moments
//! ```
//!
//! Tensors appear in `cvae_core::model::TENSOR_NAMES` order. Values are
//! stored bit-exactly, so save → load → save reproduces the same bytes.

use std::path::Path;

use cvae_core::adam::{AdamConfig, AdamState};
use cvae_core::model::{Model, ModelConfig, ModelDims, ModelParams, TENSOR_NAMES};
use cvae_core::train::EpochReport;
use cvae_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::config::InputOrderName;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"CVAECKPT";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimsRecord {
    pub items: usize,
    pub categories: usize,
    pub hidden: usize,
    pub latent: usize,
}

impl From<ModelDims> for DimsRecord {
    fn from(d: ModelDims) -> Self {
        Self {
            items: d.items,
            categories: d.categories,
            hidden: d.hidden,
            latent: d.latent,
        }
    }
}

impl From<DimsRecord> for ModelDims {
    fn from(d: DimsRecord) -> Self {
        Self {
            items: d.items,
            categories: d.categories,
            hidden: d.hidden,
            latent: d.latent,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamRecord {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl From<AdamConfig> for AdamRecord {
    fn from(a: AdamConfig) -> Self {
        Self {
            lr: a.lr,
            beta1: a.beta1,
            beta2: a.beta2,
            eps: a.eps_hat,
        }
    }
}

impl From<AdamRecord> for AdamConfig {
    fn from(a: AdamRecord) -> Self {
        Self {
            lr: a.lr,
            beta1: a.beta1,
            beta2: a.beta2,
            eps_hat: a.eps,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_train_loss: f64,
    pub mean_nll: f64,
    pub mean_kl: f64,
    pub current_beta: f64,
    pub val_ndcg: f64,
    pub wall_time: f64,
}

impl From<&EpochReport> for EpochRecord {
    fn from(r: &EpochReport) -> Self {
        Self {
            epoch: r.epoch,
            mean_train_loss: r.mean_train_loss,
            mean_nll: r.mean_nll,
            mean_kl: r.mean_kl,
            current_beta: r.current_beta,
            val_ndcg: r.val_ndcg,
            wall_time: r.wall_time,
        }
    }
}

impl From<&EpochRecord> for EpochReport {
    fn from(r: &EpochRecord) -> Self {
        Self {
            epoch: r.epoch,
            mean_train_loss: r.mean_train_loss,
            mean_nll: r.mean_nll,
            mean_kl: r.mean_kl,
            current_beta: r.current_beta,
            val_ndcg: r.val_ndcg,
            wall_time: r.wall_time,
        }
    }
}

/// Training progress carried by a resumable snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub cap: f64,
    pub epochs_done: usize,
    pub global_step: u64,
    pub bad_epochs: usize,
    pub stopped_early: bool,
    pub best_score: Option<f64>,
    pub best_epoch: usize,
    pub best_beta: f64,
    pub reports: Vec<EpochRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub dims: DimsRecord,
    pub dropout: f64,
    pub input_order: InputOrderName,
    pub seed: u64,
    pub phase: u32,
    /// Epoch (1-based) the weights come from.
    pub epoch: usize,
    /// β in effect at that epoch.
    pub beta: f64,
    pub val_ndcg: Option<f64>,
    pub adam: AdamRecord,
    /// sha256 of the split manifest the model was trained on.
    pub split_fingerprint: String,
    pub item_ids: Vec<String>,
    pub category_names: Vec<String>,
    pub progress: Option<Progress>,
}

impl CheckpointManifest {
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            dims: self.dims.into(),
            dropout: self.dropout,
            input_order: self.input_order.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub manifest: CheckpointManifest,
    pub params: ModelParams,
    pub adam: Option<Vec<AdamState>>,
}

fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::format(self.path, "checkpoint is truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::format(self.path, "length overflows"))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::format(self.path, "length overflows"))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

impl Checkpoint {
    pub fn model(&self) -> Model {
        Model {
            config: self.manifest.model_config(),
            params: self.params.clone(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * self.params.num_parameters() * 3);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let manifest = serde_json::to_vec(&self.manifest).expect("manifest serializes");
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(&manifest);
        let tensors = self.params.tensors();
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, t) in TENSOR_NAMES.iter().zip(tensors) {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rows() as u64).to_le_bytes());
            out.extend_from_slice(&(t.cols() as u64).to_le_bytes());
            put_f64s(&mut out, t.as_slice());
        }
        match &self.adam {
            None => out.push(0),
            Some(states) => {
                out.push(1);
                for s in states {
                    out.extend_from_slice(&s.step.to_le_bytes());
                    put_f64s(&mut out, &s.first_moment);
                    put_f64s(&mut out, &s.second_moment);
                }
            }
        }
        out
    }

    /// Parses a checkpoint; `path` only labels errors.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
        let mut c = Cursor { bytes, pos: 0, path };
        if c.take(8)? != MAGIC {
            return Err(Error::format(path, "not a checkpoint (bad magic)"));
        }
        let version = c.u32()?;
        if version != VERSION {
            return Err(Error::format(path, format!("unsupported checkpoint version {version}")));
        }
        let mlen = c.len()?;
        let manifest: CheckpointManifest =
            serde_json::from_slice(c.take(mlen)?).map_err(|e| Error::format(path, format!("manifest: {e}")))?;
        let dims: ModelDims = manifest.dims.into();
        let count = c.u32()? as usize;
        if count != TENSOR_NAMES.len() {
            return Err(Error::format(path, format!("expected {} tensors, found {count}", TENSOR_NAMES.len())));
        }
        let mut tensors = Vec::with_capacity(count);
        for (expected, shape) in TENSOR_NAMES.iter().zip(dims.shapes()) {
            let nlen = c.u16()? as usize;
            let name = std::str::from_utf8(c.take(nlen)?).map_err(|_| Error::format(path, "tensor name is not UTF-8"))?;
            if name != *expected {
                return Err(Error::format(path, format!("expected tensor {expected}, found {name}")));
            }
            let (rows, cols) = (c.len()?, c.len()?);
            if (rows, cols) != shape {
                return Err(Error::format(
                    path,
                    format!("tensor {name} is {rows}x{cols}, manifest dims need {}x{}", shape.0, shape.1),
                ));
            }
            tensors.push(Matrix::from_vec(rows, cols, c.f64s(rows * cols)?)?);
        }
        let params = ModelParams::from_tensors(dims, tensors)?;
        let adam = match c.u8()? {
            0 => None,
            1 => {
                let config: AdamConfig = manifest.adam.into();
                let mut states = Vec::with_capacity(count);
                for t in params.tensors() {
                    let step = c.u64()?;
                    let first_moment = c.f64s(t.len())?;
                    let second_moment = c.f64s(t.len())?;
                    states.push(AdamState {
                        step,
                        first_moment,
                        second_moment,
                        config,
                    });
                }
                Some(states)
            }
            other => return Err(Error::format(path, format!("bad optimizer flag {other}"))),
        };
        if c.pos != bytes.len() {
            return Err(Error::format(path, "trailing bytes after checkpoint"));
        }
        Ok(Checkpoint { manifest, params, adam })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::manifest::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes = std::fs::read(path).map_err(Error::io(path))?;
        Self::from_bytes(&bytes, path)
    }

    /// Checks the checkpoint against the item catalogue and categories of
    /// a split. An `s = 0` model only needs matching items.
    pub fn check_compatible(&self, path: &Path, item_ids: &[String], category_names: &[String]) -> Result<()> {
        let d = self.manifest.dims;
        if d.items != item_ids.len() || self.manifest.item_ids != item_ids {
            return Err(Error::format(
                path,
                format!("checkpoint has {} items, the split has {}", d.items, item_ids.len()),
            ));
        }
        if d.categories != 0 && self.manifest.category_names != category_names {
            return Err(Error::format(
                path,
                format!(
                    "checkpoint has {} categories, the split has {}",
                    d.categories,
                    category_names.len()
                ),
            ));
        }
        Ok(())
    }
}
