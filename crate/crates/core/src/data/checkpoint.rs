//! Binary checkpoint container.
//!
//! ```text
//! magic     8 bytes  "SPNCKPT\0"
//! version   u32 LE
//! body_len  u64 LE
//! body:
//!   header_len u32 LE, header (UTF-8 JSON: scenario, hyper, seed,
//!                              feature_config_hash, config, normalizer)
//!   count      u32 LE
//!   count x { name_len u16 LE, name UTF-8, partition u8, ndim u8,
//!             ndim x u32 LE dims, prod(dims) x f64 LE values }
//! checksum  32 bytes SHA-256 of every preceding byte
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::Tensor;
use crate::error::{CheckpointError, Error, Result};
use crate::model::{ScenarioId, SpnConfig, SpnModel, TargetNormalizer, TrainConfig};
use crate::nn::{ParamStore, Partition};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SPNCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;
const PREFIX: usize = 8 + 4 + 8;
const CHECKSUM: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub scenario: Option<ScenarioId>,
    pub hyper: Option<TrainConfig>,
    pub seed: u64,
    pub feature_config_hash: String,
    pub config: SpnConfig,
    pub normalizer: Option<TargetNormalizer>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: ParamStore,
}

impl Checkpoint {
    pub fn from_model(
        model: &SpnModel,
        scenario: Option<ScenarioId>,
        hyper: Option<TrainConfig>,
        seed: u64,
        feature_config_hash: impl Into<String>,
    ) -> Self {
        Checkpoint {
            meta: CheckpointMeta {
                scenario,
                hyper,
                seed,
                feature_config_hash: feature_config_hash.into(),
                config: model.config().clone(),
                normalizer: model.normalizer.clone(),
            },
            params: model.store().clone(),
        }
    }

    pub fn into_model(self) -> Result<SpnModel> {
        SpnModel::from_parts(self.meta.config, self.params, self.meta.normalizer)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut body = Vec::new();
        let header = serde_json::to_vec(&self.meta).map_err(|e| Error::invalid(format!("checkpoint header: {e}")))?;
        body.extend((header.len() as u32).to_le_bytes());
        body.extend(&header);
        body.extend((self.params.len() as u32).to_le_bytes());
        for (_, p) in self.params.iter() {
            if let Some(i) = p.value.first_non_finite() {
                return Err(Error::invalid(format!("parameter {} has a non-finite value at {i}", p.name)));
            }
            let name = p.name.as_bytes();
            let name_len = u16::try_from(name.len())
                .map_err(|_| Error::invalid(format!("parameter name too long: {}", p.name)))?;
            body.extend(name_len.to_le_bytes());
            body.extend(name);
            body.push(p.partition.tag());
            body.push(p.value.ndim() as u8);
            for &d in p.value.shape() {
                body.extend((d as u32).to_le_bytes());
            }
            for v in p.value.data() {
                body.extend(v.to_le_bytes());
            }
        }
        let mut out = Vec::with_capacity(PREFIX + body.len() + CHECKSUM);
        out.extend(CHECKPOINT_MAGIC);
        out.extend(CHECKPOINT_VERSION.to_le_bytes());
        out.extend((body.len() as u64).to_le_bytes());
        out.extend(body);
        let digest = Sha256::digest(&out);
        out.extend(digest);
        Ok(out)
    }

    /// Parses a container; with `expected_hash`, also requires the stored
    /// feature configuration hash to match.
    pub fn from_bytes(bytes: &[u8], expected_hash: Option<&str>) -> Result<Self, CheckpointError> {
        if bytes.len() < 8 {
            return Err(if CHECKPOINT_MAGIC.starts_with(bytes) {
                CheckpointError::Truncated
            } else {
                CheckpointError::BadMagic
            });
        }
        if &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        if bytes.len() < PREFIX {
            return Err(CheckpointError::Truncated);
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let body_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
        let total = (PREFIX as u64)
            .checked_add(body_len)
            .and_then(|n| n.checked_add(CHECKSUM as u64))
            .ok_or_else(|| CheckpointError::Malformed("body length overflows".into()))?;
        if (bytes.len() as u64) < total {
            return Err(CheckpointError::Truncated);
        }
        if bytes.len() as u64 > total {
            return Err(CheckpointError::Malformed("trailing bytes after checksum".into()));
        }
        let split = bytes.len() - CHECKSUM;
        if Sha256::digest(&bytes[..split]).as_slice() != &bytes[split..] {
            return Err(CheckpointError::Integrity);
        }
        let mut r = Reader {
            buf: &bytes[PREFIX..split],
        };
        let header_len = r.u32()? as usize;
        let meta: CheckpointMeta = serde_json::from_slice(r.take(header_len)?)
            .map_err(|e| CheckpointError::Malformed(format!("header: {e}")))?;
        if let Some(expected) = expected_hash {
            if meta.feature_config_hash != expected {
                return Err(CheckpointError::Incompatible {
                    expected: expected.to_string(),
                    found: meta.feature_config_hash,
                });
            }
        }
        let count = r.u32()? as usize;
        let mut params = ParamStore::new();
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| CheckpointError::Malformed("parameter name is not UTF-8".into()))?
                .to_string();
            let tag = r.u8()?;
            let partition = Partition::from_tag(tag)
                .ok_or_else(|| CheckpointError::Malformed(format!("unknown partition tag {tag} for {name}")))?;
            let ndim = r.u8()? as usize;
            let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            let n = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
            let n = n.ok_or_else(|| CheckpointError::Malformed(format!("shape of {name} overflows")))?;
            let raw = r.take(n.checked_mul(8).ok_or(CheckpointError::Truncated)?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            if params.find(&name).is_some() {
                return Err(CheckpointError::Malformed(format!("duplicate parameter {name}")));
            }
            let value = Tensor::new(shape, data).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
            params.add(name, partition, value);
        }
        if !r.buf.is_empty() {
            return Err(CheckpointError::Malformed("unread bytes after parameters".into()));
        }
        Ok(Checkpoint { meta, params })
    }
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.buf.len() < n {
            return Err(CheckpointError::Malformed("record runs past end of body".into()));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    let bytes = checkpoint.to_bytes()?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path, expected_hash: Option<&str>) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(Checkpoint::from_bytes(&bytes, expected_hash)?)
}
