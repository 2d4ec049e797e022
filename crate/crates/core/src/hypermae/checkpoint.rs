//! Checkpoint container.
//!
//! All integers little-endian.
//!
//! | bytes          | field                                        |
//! |----------------|----------------------------------------------|
//! | 4              | magic `LVCK`                                 |
//! | 2              | u16 version                                  |
//! | 4 + n          | u32 length, UTF-8 `key=value` model config   |
//! | 32             | trainer generator seed                       |
//! | 16             | u128 trainer generator word position         |
//! | 4              | u32 tensor count                             |
//!
//! Each tensor: u16 name length, UTF-8 name, u8 rank, rank × u32 dims,
//! then the values as f32.

use std::path::Path;

use lessvit_tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::{HyperMae, HyperMaeConfig};
use crate::error::{LessError, Result};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"LVCK";
pub const CHECKPOINT_VERSION: u16 = 1;

pub fn encode_checkpoint(model: &HyperMae, rng: &ChaCha8Rng) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let config = model.cfg.to_record();
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(config.as_bytes());
    out.extend_from_slice(&rng.get_seed());
    out.extend_from_slice(&rng.get_word_pos().to_le_bytes());
    out.extend_from_slice(&(model.store.len() as u32).to_le_bytes());
    for (_, name, t) in model.store.iter() {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.rank() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            LessError::Checkpoint(format!("truncated at byte {} of {}", self.at, self.bytes.len()))
        })?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn text(&mut self, n: usize) -> Result<&'a str> {
        std::str::from_utf8(self.take(n)?).map_err(|e| LessError::Checkpoint(format!("invalid UTF-8: {e}")))
    }
}

/// Model and trainer generator stored in `bytes`.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<(HyperMae, ChaCha8Rng)> {
    let mut r = Reader { bytes, at: 0 };
    let magic: [u8; 4] = r.array()?;
    if magic != CHECKPOINT_MAGIC {
        return Err(LessError::Checkpoint(format!("bad magic {magic:?}")));
    }
    let version = r.u16()?;
    if version != CHECKPOINT_VERSION {
        return Err(LessError::Checkpoint(format!(
            "version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let n = r.u32()? as usize;
    let cfg = HyperMaeConfig::from_record(r.text(n)?)?;
    let mut rng = ChaCha8Rng::from_seed(r.array()?);
    rng.set_word_pos(u128::from_le_bytes(r.array()?));
    let mut model = HyperMae::new(cfg, 0)?;
    let count = r.u32()? as usize;
    if count != model.store.len() {
        return Err(LessError::Checkpoint(format!(
            "{count} tensors stored, model has {}",
            model.store.len()
        )));
    }
    for _ in 0..count {
        let len = r.u16()? as usize;
        let name = r.text(len)?;
        let id = model
            .store
            .find(name)
            .ok_or_else(|| LessError::Checkpoint(format!("unknown tensor `{name}`")))?;
        let rank = r.take(1)?[0] as usize;
        let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        if shape != model.store.get(id).shape() {
            return Err(LessError::Checkpoint(format!(
                "`{name}` stored as {shape:?}, model expects {:?}",
                model.store.get(id).shape()
            )));
        }
        let numel: usize = shape.iter().product();
        let data = r
            .take(numel * 4)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")) as f64)
            .collect();
        model.store.set(id, Tensor::new(&shape, data)?)?;
    }
    if r.at != bytes.len() {
        return Err(LessError::Checkpoint(format!("{} trailing bytes", bytes.len() - r.at)));
    }
    Ok((model, rng))
}

pub fn save_checkpoint(path: &Path, model: &HyperMae, rng: &ChaCha8Rng) -> Result<()> {
    Ok(std::fs::write(path, encode_checkpoint(model, rng))?)
}

pub fn load_checkpoint(path: &Path) -> Result<(HyperMae, ChaCha8Rng)> {
    decode_checkpoint(&std::fs::read(path)?)
}
