//! Checkpoint files: a header naming the model configuration by digest,
//! followed by named fp32 tensor records.
//!
//! Layout (little-endian): magic `SVCK`, u32 version, 32-byte config digest,
//! u32 record count, then per record: u16 name length, UTF-8 name, u8 rank,
//! rank × u32 extents, fp32 payload.

use std::collections::BTreeMap;
use std::path::Path;

use ndgrad::Tensor;

use crate::model::{param_shapes, ModelConfig, ParamSet};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SVCK";
pub const CHECKPOINT_VERSION: u32 = 1;
const MAX_NAME: usize = 256;
const MAX_RANK: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub digest: [u8; 32],
    pub records: BTreeMap<String, Tensor<f32>>,
}

fn bad(reason: impl Into<String>) -> Error {
    Error::format("checkpoint", reason)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end = end.ok_or_else(|| bad(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
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

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

impl Checkpoint {
    pub fn new(config: &ModelConfig) -> Self {
        Checkpoint {
            digest: config.digest(),
            records: BTreeMap::new(),
        }
    }

    /// A checkpoint holding the model parameters under their own names.
    pub fn from_params(config: &ModelConfig, params: &ParamSet<f32>) -> Self {
        let mut ck = Checkpoint::new(config);
        for (name, t) in params.iter() {
            ck.records.insert(name.clone(), t.clone());
        }
        ck
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.digest);
        let count = u32::try_from(self.records.len()).map_err(|_| bad("too many records"))?;
        out.extend_from_slice(&count.to_le_bytes());
        for (name, t) in &self.records {
            if name.is_empty() || name.len() > MAX_NAME {
                return Err(bad(format!("record name length {} outside 1..={MAX_NAME}", name.len())));
            }
            if t.rank() == 0 || t.rank() > MAX_RANK {
                return Err(bad(format!("record {name} has rank {}", t.rank())));
            }
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.rank() as u8);
            for &e in t.shape() {
                let e = u32::try_from(e).map_err(|_| bad(format!("record {name} extent {e} too large")))?;
                out.extend_from_slice(&e.to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(bad("bad magic"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let digest: [u8; 32] = r.take(32)?.try_into().unwrap();
        let count = r.u32()? as usize;
        let mut records = BTreeMap::new();
        for _ in 0..count {
            let len = r.u16()? as usize;
            if len == 0 || len > MAX_NAME {
                return Err(bad(format!("record name length {len} outside 1..={MAX_NAME}")));
            }
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| bad("record name is not UTF-8"))?
                .to_string();
            let rank = r.u8()? as usize;
            if rank == 0 || rank > MAX_RANK {
                return Err(bad(format!("record {name} has rank {rank}")));
            }
            let mut shape = Vec::with_capacity(rank);
            let mut numel = 1usize;
            for _ in 0..rank {
                let e = r.u32()? as usize;
                numel = numel.checked_mul(e).filter(|n| *n <= r.remaining() / 4).ok_or_else(|| {
                    bad(format!("record {name} payload exceeds the file"))
                })?;
                shape.push(e);
            }
            let payload = r.take(numel * 4)?;
            let data = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            let t = Tensor::new(&shape, data).map_err(|e| bad(format!("record {name}: {e}")))?;
            if records.insert(name.clone(), t).is_some() {
                return Err(bad(format!("duplicate record {name}")));
            }
        }
        if r.remaining() != 0 {
            return Err(bad(format!("{} trailing bytes", r.remaining())));
        }
        Ok(Checkpoint { digest, records })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }

    /// Errors unless the checkpoint was written for `config`.
    pub fn check_config(&self, config: &ModelConfig) -> Result<()> {
        if self.digest == config.digest() {
            Ok(())
        } else {
            Err(Error::ConfigMismatch(format!(
                "digest {} != {}",
                hex(&self.digest),
                hex(&config.digest())
            )))
        }
    }

    /// Extracts exactly the parameters `config` defines, checking shapes.
    pub fn params(&self, config: &ModelConfig) -> Result<ParamSet<f32>> {
        self.check_config(config)?;
        let mut set = ParamSet::default();
        for (name, shape) in param_shapes(config) {
            let t = self
                .records
                .get(&name)
                .ok_or_else(|| bad(format!("missing parameter record {name}")))?;
            if t.shape() != shape.as_slice() {
                return Err(bad(format!("parameter {name} has shape {:?}, expected {shape:?}", t.shape())));
            }
            set.insert(name, t.clone());
        }
        Ok(set)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes[..8].iter().map(|b| format!("{b:02x}")).collect()
}
