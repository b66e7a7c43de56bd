//! Compressing a parameter set to per-chunk latent means and back.
//!
//! The `VAEC` archive layout (little-endian):
//!
//! ```text
//! magic "VAEC" | version u16 | kind u8 | chunk_size u32 | latent_dim u32
//! | n_chunks u32 | pad_len u32 | n_chunks·latent_dim × f32 (chunk order)
//! ```

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::codec::{unchunk, unflatten, ChunkedParams, CodecError};
use crate::models::{BaseModelSpec, ModelError};
use crate::nn::{ModelKind, ParamSet, Tensor};
use crate::vae::{VaeError, VaeParams};
use crate::weights::{put_f32s, Cursor, FormatError};

pub const VAEC_MAGIC: [u8; 4] = *b"VAEC";
pub const VAEC_VERSION: u16 = 1;
const ENCODE_BATCH: usize = 64;

#[derive(Debug, Error)]
pub enum CompressError {
    #[error("archive holds {archive} parameters but the model is {model}")]
    KindMismatch { archive: ModelKind, model: ModelKind },
    #[error("VAE expects {vae}-wide chunks, archive uses {archive}")]
    ChunkSize { vae: usize, archive: usize },
    #[error("latent width {archive} does not match VAE latent {vae}")]
    LatentDim { vae: usize, archive: usize },
    #[error("archive header is inconsistent: {0}")]
    Header(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Vae(#[from] VaeError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Format(#[from] FormatError),
}

/// The compressed form of one parameter set: encoder means per chunk.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentArchive {
    pub kind: ModelKind,
    pub chunk_size: usize,
    pub latent_dim: usize,
    pub n_chunks: usize,
    pub pad_len: usize,
    /// `n_chunks × latent_dim`, chunk-major.
    pub latents: Vec<f32>,
}

impl LatentArchive {
    /// Number of original parameters the archive stands for.
    pub fn param_count(&self) -> usize {
        (self.n_chunks * self.chunk_size).saturating_sub(self.pad_len)
    }

    pub fn stored_values(&self) -> usize {
        self.n_chunks * self.latent_dim
    }

    pub fn validate(&self) -> Result<(), CompressError> {
        if self.chunk_size == 0 || self.latent_dim == 0 {
            return Err(CompressError::Header("chunk_size and latent_dim must be positive".into()));
        }
        if self.pad_len >= self.chunk_size || self.pad_len > self.n_chunks * self.chunk_size {
            return Err(CompressError::Header(format!("pad_len {} with {} chunks of {}", self.pad_len, self.n_chunks, self.chunk_size)));
        }
        if self.latents.len() != self.stored_values() {
            return Err(CompressError::Header(format!("{} latent values for {} × {}", self.latents.len(), self.n_chunks, self.latent_dim)));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(25 + self.latents.len() * 4);
        out.extend_from_slice(&VAEC_MAGIC);
        out.extend_from_slice(&VAEC_VERSION.to_le_bytes());
        out.push(self.kind.tag());
        for v in [self.chunk_size, self.latent_dim, self.n_chunks, self.pad_len] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        put_f32s(&mut out, &self.latents);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CompressError> {
        let mut c = Cursor::new(bytes);
        c.magic("VAEC")?;
        let version = c.u16()?;
        if version != VAEC_VERSION {
            return Err(FormatError::Version { found: version }.into());
        }
        let kind = c.kind()?;
        let chunk_size = c.u32()? as usize;
        let latent_dim = c.u32()? as usize;
        let n_chunks = c.u32()? as usize;
        let pad_len = c.u32()? as usize;
        let latents = c.f32s(n_chunks * latent_dim)?;
        c.finish()?;
        let a = LatentArchive { kind, chunk_size, latent_dim, n_chunks, pad_len, latents };
        a.validate()?;
        Ok(a)
    }

    pub fn save(&self, path: &Path) -> Result<(), CompressError> {
        fs::write(path, self.to_bytes()).map_err(|source| FormatError::Io { path: path.display().to_string(), source }.into())
    }

    pub fn load(path: &Path) -> Result<Self, CompressError> {
        let bytes = fs::read(path).map_err(|source| FormatError::Io { path: path.display().to_string(), source })?;
        LatentArchive::from_bytes(&bytes)
    }
}

/// Encodes every chunk of `params` and keeps the posterior means.
pub fn compress(params: &ParamSet, vae: &VaeParams) -> Result<LatentArchive, CompressError> {
    if params.kind == ModelKind::Vae {
        return Err(CompressError::KindMismatch { archive: params.kind, model: params.kind });
    }
    let chunked = ChunkedParams::from_params(params, vae.arch.input_dim)?;
    let all = chunked.to_tensor();
    let n = chunked.n_chunks();
    let mut latents = Vec::with_capacity(n * vae.arch.latent_dim);
    let mut start = 0;
    while start < n {
        let end = (start + ENCODE_BATCH).min(n);
        let (mu, _) = vae.encode(&all.slice_rows(start, end))?;
        latents.extend_from_slice(mu.data());
        start = end;
    }
    Ok(LatentArchive {
        kind: params.kind,
        chunk_size: chunked.chunk_size,
        latent_dim: vae.arch.latent_dim,
        n_chunks: n,
        pad_len: chunked.pad_len,
        latents,
    })
}

/// Decodes every latent, strips the padding and rebuilds the parameter set.
pub fn decompress(archive: &LatentArchive, vae: &VaeParams, spec: &BaseModelSpec) -> Result<ParamSet, CompressError> {
    archive.validate()?;
    if archive.kind != spec.kind {
        return Err(CompressError::KindMismatch { archive: archive.kind, model: spec.kind });
    }
    if archive.chunk_size != vae.arch.input_dim {
        return Err(CompressError::ChunkSize { vae: vae.arch.input_dim, archive: archive.chunk_size });
    }
    if archive.latent_dim != vae.arch.latent_dim {
        return Err(CompressError::LatentDim { vae: vae.arch.latent_dim, archive: archive.latent_dim });
    }
    if archive.param_count() != spec.num_params() {
        return Err(CompressError::Header(format!(
            "{} chunks of {} minus {} padding is {}, model needs {}",
            archive.n_chunks,
            archive.chunk_size,
            archive.pad_len,
            archive.param_count(),
            spec.num_params()
        )));
    }
    let z = Tensor::new(vec![archive.n_chunks, archive.latent_dim], archive.latents.clone()).expect("validated");
    let mut data = Vec::with_capacity(archive.n_chunks * archive.chunk_size);
    let mut start = 0;
    while start < archive.n_chunks {
        let end = (start + ENCODE_BATCH).min(archive.n_chunks);
        data.extend_from_slice(vae.decode(&z.slice_rows(start, end))?.data());
        start = end;
    }
    let chunked = ChunkedParams {
        chunk_size: archive.chunk_size,
        data,
        pad_len: archive.pad_len,
        total_len: archive.param_count(),
        kind: Some(archive.kind),
    };
    Ok(unflatten(&unchunk(&chunked)?, spec)?)
}

/// Original parameter count over stored latent values (decoder excluded).
pub fn compression_rate(archive: &LatentArchive) -> f64 {
    archive.param_count() as f64 / archive.stored_values() as f64
}

/// Rate that also charges the decoder weights to this archive.
pub fn compression_rate_with_decoder(archive: &LatentArchive, vae: &VaeParams) -> f64 {
    archive.param_count() as f64 / (archive.stored_values() + vae.decoder_params()) as f64
}
