//! Flattening a parameter set into one sequence and cutting it into
//! fixed-length, zero-padded chunks.

use thiserror::Error;

use crate::models::BaseModelSpec;
use crate::nn::{ModelKind, ParamSet, Tensor};

pub const DEFAULT_CHUNK_SIZE: usize = 2048;

#[derive(Debug, Error, PartialEq)]
pub enum CodecError {
    #[error("chunk size must be at least 1")]
    ChunkSize,
    #[error("flat length {actual} does not match the {expected} parameters of the layout")]
    Length { expected: usize, actual: usize },
    #[error("inconsistent chunk bookkeeping: {0}")]
    Bookkeeping(String),
}

/// Row-major concatenation of every block in canonical order.
pub fn flatten(params: &ParamSet) -> Tensor {
    let mut flat = Vec::with_capacity(params.num_params());
    for block in params.blocks() {
        flat.extend_from_slice(block.value.data());
    }
    Tensor::from_vec(flat)
}

/// Inverse of [`flatten`] for a given block layout.
pub fn unflatten_layout(flat: &[f32], kind: ModelKind, layout: &[(String, Vec<usize>)]) -> Result<ParamSet, CodecError> {
    let expected: usize = layout.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
    if flat.len() != expected {
        return Err(CodecError::Length { expected, actual: flat.len() });
    }
    let mut params = ParamSet::new(kind);
    let mut at = 0;
    for (name, shape) in layout {
        let n: usize = shape.iter().product();
        params.push(name.clone(), Tensor::new(shape.clone(), flat[at..at + n].to_vec()).expect("size from shape"));
        at += n;
    }
    Ok(params)
}

/// Rebuilds a runnable parameter set for `spec` from a flat sequence.
pub fn unflatten(flat: &Tensor, spec: &BaseModelSpec) -> Result<ParamSet, CodecError> {
    unflatten_layout(flat.data(), spec.kind, spec.layout())
}

/// A flattened parameter sequence cut into equal chunks.
///
/// `data` holds `n_chunks · chunk_size` values; the last `pad_len` are
/// padding.
#[derive(Clone, Debug, PartialEq)]
pub struct ChunkedParams {
    pub chunk_size: usize,
    pub data: Vec<f32>,
    pub pad_len: usize,
    pub total_len: usize,
    pub kind: Option<ModelKind>,
}

impl ChunkedParams {
    pub fn n_chunks(&self) -> usize {
        self.data.len() / self.chunk_size.max(1)
    }

    pub fn chunk(&self, i: usize) -> &[f32] {
        &self.data[i * self.chunk_size..(i + 1) * self.chunk_size]
    }

    pub fn chunks(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.chunk_size)
    }

    /// All chunks as a `[n_chunks, chunk_size]` tensor.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![self.n_chunks(), self.chunk_size], self.data.clone()).expect("whole chunks")
    }

    pub fn from_params(params: &ParamSet, chunk_size: usize) -> Result<Self, CodecError> {
        let mut c = chunk(&flatten(params), chunk_size)?;
        c.kind = Some(params.kind);
        Ok(c)
    }

    /// Checks every bookkeeping invariant.
    pub fn validate(&self) -> Result<(), CodecError> {
        let bad = |m: String| Err(CodecError::Bookkeeping(m));
        if self.chunk_size == 0 {
            return Err(CodecError::ChunkSize);
        }
        if !self.data.len().is_multiple_of(self.chunk_size) {
            return bad(format!("{} values is not a whole number of {}-chunks", self.data.len(), self.chunk_size));
        }
        if self.total_len + self.pad_len != self.data.len() {
            return bad(format!(
                "total_len {} + pad_len {} != {} chunks × {}",
                self.total_len,
                self.pad_len,
                self.n_chunks(),
                self.chunk_size
            ));
        }
        if self.pad_len >= self.chunk_size {
            return bad(format!("pad_len {} is not below chunk_size {}", self.pad_len, self.chunk_size));
        }
        Ok(())
    }
}

/// `ceil(n / chunk_size)` chunks; the tail of the last one is zero-filled.
pub fn chunk(flat: &Tensor, chunk_size: usize) -> Result<ChunkedParams, CodecError> {
    if chunk_size == 0 {
        return Err(CodecError::ChunkSize);
    }
    let total_len = flat.len();
    let n_chunks = total_len.div_ceil(chunk_size);
    let pad_len = n_chunks * chunk_size - total_len;
    let mut data = Vec::with_capacity(n_chunks * chunk_size);
    data.extend_from_slice(flat.data());
    data.resize(n_chunks * chunk_size, 0.0);
    Ok(ChunkedParams { chunk_size, data, pad_len, total_len, kind: None })
}

/// Concatenates the chunks and drops the padded tail.
pub fn unchunk(chunked: &ChunkedParams) -> Result<Tensor, CodecError> {
    chunked.validate()?;
    Ok(Tensor::from_vec(chunked.data[..chunked.total_len].to_vec()))
}
