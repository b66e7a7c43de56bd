//! `NNWT` binary container for parameter sets.
//!
//! ```text
//! magic      4 bytes  "NNWT"
//! version    u16 LE   (1)
//! kind       u8       ModelKind tag
//! [VAE only] chunk_size u32 LE, latent_dim u32 LE
//! blocks     u32 LE
//! per block: name_len u16 LE, name UTF-8, rank u8, extents u32 LE × rank,
//!            payload f32 LE × product(extents)
//! ```

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::nn::{ModelKind, ParamSet, Tensor};

pub const NNWT_MAGIC: [u8; 4] = *b"NNWT";
pub const NNWT_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic {found:?} at offset 0, expected {expected:?}")]
    BadMagic { found: Vec<u8>, expected: &'static str },
    #[error("unsupported version {found} at offset 4")]
    Version { found: u16 },
    #[error("unknown kind tag {tag} at offset {offset}")]
    UnknownKind { tag: u8, offset: usize },
    #[error("truncated: need {needed} bytes at offset {offset}, have {available}")]
    Truncated { offset: usize, needed: usize, available: usize },
    #[error("block name at offset {offset} is not UTF-8")]
    Name { offset: usize },
    #[error("{count} trailing bytes at offset {offset}")]
    Trailing { offset: usize, count: usize },
    #[error("inconsistent header: {0}")]
    Header(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Extra header fields carried by VAE weight files.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VaeHeader {
    pub chunk_size: u32,
    pub latent_dim: u32,
}

/// Little-endian reader that reports offsets on failure.
pub(crate) struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Cursor { bytes, pos: 0 }
    }

    pub(crate) fn offset(&self) -> usize {
        self.pos
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(FormatError::Truncated { offset: self.pos, needed: n, available });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn magic(&mut self, expected: &'static str) -> Result<(), FormatError> {
        let found = self.take(4).map_err(|_| FormatError::BadMagic { found: self.bytes.to_vec(), expected })?;
        if found != expected.as_bytes() {
            return Err(FormatError::BadMagic { found: found.to_vec(), expected });
        }
        Ok(())
    }

    pub(crate) fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16, FormatError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    pub(crate) fn u32(&mut self) -> Result<u32, FormatError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub(crate) fn f32s(&mut self, n: usize) -> Result<Vec<f32>, FormatError> {
        let needed = n.checked_mul(4).ok_or(FormatError::Truncated { offset: self.pos, needed: usize::MAX, available: 0 })?;
        let b = self.take(needed)?;
        Ok(b.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
    }

    pub(crate) fn kind(&mut self) -> Result<ModelKind, FormatError> {
        let offset = self.pos;
        let tag = self.u8()?;
        ModelKind::from_tag(tag).ok_or(FormatError::UnknownKind { tag, offset })
    }

    pub(crate) fn finish(self) -> Result<(), FormatError> {
        if self.pos != self.bytes.len() {
            return Err(FormatError::Trailing { offset: self.pos, count: self.bytes.len() - self.pos });
        }
        Ok(())
    }
}

pub(crate) fn put_f32s(out: &mut Vec<u8>, values: &[f32]) {
    out.reserve(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serializes a parameter set. VAE sets must carry a header, others must not.
pub fn write_nnwt(params: &ParamSet, header: Option<VaeHeader>) -> Result<Vec<u8>, FormatError> {
    match (params.kind, header) {
        (ModelKind::Vae, None) => return Err(FormatError::Header("VAE weights need chunk_size and latent_dim".into())),
        (k, Some(_)) if k != ModelKind::Vae => {
            return Err(FormatError::Header(format!("{k} weights cannot carry a VAE header")))
        }
        _ => {}
    }
    let mut out = Vec::with_capacity(16 + params.num_params() * 4);
    out.extend_from_slice(&NNWT_MAGIC);
    out.extend_from_slice(&NNWT_VERSION.to_le_bytes());
    out.push(params.kind.tag());
    if let Some(h) = header {
        out.extend_from_slice(&h.chunk_size.to_le_bytes());
        out.extend_from_slice(&h.latent_dim.to_le_bytes());
    }
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for block in params.blocks() {
        let name = block.name.as_bytes();
        let name_len = u16::try_from(name.len()).map_err(|_| FormatError::Header(format!("block name `{}` too long", block.name)))?;
        out.extend_from_slice(&name_len.to_le_bytes());
        out.extend_from_slice(name);
        let rank = u8::try_from(block.value.rank()).map_err(|_| FormatError::Header(format!("block `{}` rank too high", block.name)))?;
        out.push(rank);
        for &e in block.value.shape() {
            let e = u32::try_from(e).map_err(|_| FormatError::Header(format!("block `{}` extent too large", block.name)))?;
            out.extend_from_slice(&e.to_le_bytes());
        }
        put_f32s(&mut out, block.value.data());
    }
    Ok(out)
}

pub fn read_nnwt(bytes: &[u8]) -> Result<(ParamSet, Option<VaeHeader>), FormatError> {
    let mut c = Cursor::new(bytes);
    c.magic("NNWT")?;
    let version = c.u16()?;
    if version != NNWT_VERSION {
        return Err(FormatError::Version { found: version });
    }
    let kind = c.kind()?;
    let header = if kind == ModelKind::Vae {
        Some(VaeHeader { chunk_size: c.u32()?, latent_dim: c.u32()? })
    } else {
        None
    };
    let count = c.u32()?;
    let mut params = ParamSet::new(kind);
    for _ in 0..count {
        let name_len = c.u16()? as usize;
        let name_at = c.offset();
        let name = std::str::from_utf8(c.take(name_len)?).map_err(|_| FormatError::Name { offset: name_at })?.to_string();
        let rank = c.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(c.u32()? as usize);
        }
        let n = shape.iter().try_fold(1usize, |acc, &e| acc.checked_mul(e));
        let n = n.ok_or(FormatError::Header(format!("block `{name}` extents overflow")))?;
        let data = c.f32s(n)?;
        params.push(name, Tensor::new(shape, data).expect("length derived from shape"));
    }
    c.finish()?;
    Ok((params, header))
}

pub fn save_nnwt(path: &Path, params: &ParamSet, header: Option<VaeHeader>) -> Result<(), FormatError> {
    let bytes = write_nnwt(params, header)?;
    fs::write(path, bytes).map_err(|source| FormatError::Io { path: path.display().to_string(), source })
}

pub fn load_nnwt(path: &Path) -> Result<(ParamSet, Option<VaeHeader>), FormatError> {
    let bytes = fs::read(path).map_err(|source| FormatError::Io { path: path.display().to_string(), source })?;
    read_nnwt(&bytes)
}
