//! Binary checkpoint container.
//!
//! ```text
//! "MALN"            4 bytes magic
//! version           u16 LE (currently 1)
//! block count       u32 LE
//! per block:
//!   name length     u16 LE
//!   name            UTF-8 bytes
//!   rank            u8
//!   extents         rank × u32 LE
//!   values          product(extents) × f32 LE
//! ```
//!
//! Parameters are kept at single precision in memory, so a save/load
//! round trip is bit-exact.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{Encoder, Linear, ModalityClassifier, ModalityTable, Modality, ModelParams};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const MAGIC: &[u8; 4] = b"MALN";
pub const VERSION: u16 = 1;

pub fn write_checkpoint(params: &ModelParams) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let info = params.param_info();
    let tensors = params.tensors();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (info, t) in info.iter().zip(tensors) {
        let name = info.name.as_bytes();
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name);
        out.push(t.rank() as u8);
        for &e in t.shape() {
            out.extend_from_slice(&(e as u32).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::CorruptCheckpoint(format!(
                "truncated at byte {} (needed {n} more)",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("two bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("four bytes")))
    }
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<ModelParams> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::VersionMismatch("missing MALN magic".into()));
    }
    let mut r = Reader { buf: bytes, pos: 4 };
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::VersionMismatch(format!(
            "file version {version}, supported {VERSION}"
        )));
    }
    let count = r.u32()? as usize;
    let mut blocks = BTreeMap::new();
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::CorruptCheckpoint("block name is not UTF-8".into()))?
            .to_string();
        let rank = r.u8()? as usize;
        let shape = (0..rank).map(|_| r.u32().map(|e| e as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::CorruptCheckpoint("block too large".into()))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("four bytes")) as f64)
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| Error::CorruptCheckpoint(format!("block `{name}`: {e}")))?;
        if blocks.insert(name.clone(), t).is_some() {
            return Err(Error::CorruptCheckpoint(format!("duplicate block `{name}`")));
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::CorruptCheckpoint(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    assemble(blocks)
}

fn assemble(mut blocks: BTreeMap<String, Tensor>) -> Result<ModelParams> {
    let corrupt = |e: Error| Error::CorruptCheckpoint(e.to_string());
    let mut take = |name: &str| {
        blocks
            .remove(name)
            .ok_or_else(|| Error::CorruptCheckpoint(format!("missing block `{name}`")))
    };
    let table = ModalityTable::new(take("modality_table")?).map_err(corrupt)?;
    let classifier = ModalityClassifier {
        linear: Linear::new(take("classifier.weight")?, take("classifier.bias")?).map_err(corrupt)?,
    };
    if classifier.linear.output_dim() != Modality::COUNT || classifier.linear.input_dim() != table.dim() {
        return Err(Error::CorruptCheckpoint("classifier shape does not match the table".into()));
    }

    let temperature = blocks.remove("temperature");
    if let Some(t) = &temperature {
        if t.len() != 1 || t.item() <= 0.0 {
            return Err(Error::CorruptCheckpoint("temperature must be one positive value".into()));
        }
    }

    let mut encoder = |prefix: &str| -> Result<Encoder> {
        let mut layers = Vec::new();
        loop {
            let w = blocks.remove(&format!("{prefix}.{}.weight", layers.len()));
            let b = blocks.remove(&format!("{prefix}.{}.bias", layers.len()));
            match (w, b) {
                (Some(w), Some(b)) => layers.push(Linear::new(w, b).map_err(corrupt)?),
                (None, None) => break,
                _ => return Err(Error::CorruptCheckpoint(format!("incomplete layer in `{prefix}`"))),
            }
        }
        if layers.is_empty() {
            Ok(Encoder::identity(table.dim()))
        } else {
            Encoder::new(layers).map_err(corrupt)
        }
    };
    let image_encoder = encoder("image_encoder")?;
    let text_encoder = encoder("text_encoder")?;
    if image_encoder.output_dim() != table.dim() || text_encoder.output_dim() != table.dim() {
        return Err(Error::CorruptCheckpoint("encoder output does not match the table".into()));
    }
    if let Some(name) = blocks.keys().next() {
        return Err(Error::CorruptCheckpoint(format!("unknown block `{name}`")));
    }
    Ok(ModelParams {
        image_encoder,
        text_encoder,
        table,
        classifier,
        temperature,
    })
}

pub fn save_checkpoint(params: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_checkpoint(params)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelParams> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&bytes)
}
