//! The end-to-end flow for one trained model: noisy variants, pooled chunks,
//! VAE training, compression, reconstruction and evaluation.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{generate_variants, AugmentConfig};
use crate::codec::{chunk, flatten, CodecError, DEFAULT_CHUNK_SIZE};
use crate::compress::{compress, compression_rate, compression_rate_with_decoder, decompress, CompressError, LatentArchive};
use crate::mnist::MnistDataset;
use crate::models::{evaluate, BaseModelSpec, Evaluation, ModelError};
use crate::nn::{ParamSet, Tensor};
use crate::vae::{train_vae, VaeEpoch, VaeError, VaeTrainConfig, VaeTrainOutcome};

/// Each variant follows the failing stage's name.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("gen-data: {0}")]
    GenData(#[source] CodecError),
    #[error("train-vae: {0}")]
    TrainVae(#[source] VaeError),
    #[error("compress: {0}")]
    Compress(#[source] CompressError),
    #[error("decompress: {0}")]
    Decompress(#[source] CompressError),
    #[error("evaluate: {0}")]
    Evaluate(#[source] ModelError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub chunk_size: usize,
    pub augment: AugmentConfig,
    pub vae: VaeTrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig { chunk_size: DEFAULT_CHUNK_SIZE, augment: AugmentConfig::default(), vae: VaeTrainConfig::default() }
    }
}

/// Stacks the chunks of every flat sequence into one `[Σ n_chunks, chunk_size]`
/// training matrix. Chunks from all sequences are treated as independent rows.
pub fn pool_chunks(flats: &[Tensor], chunk_size: usize) -> Result<Tensor, CodecError> {
    let mut data = Vec::new();
    let mut rows = 0;
    for f in flats {
        let c = chunk(f, chunk_size)?;
        rows += c.n_chunks();
        data.extend_from_slice(&c.data);
    }
    Ok(Tensor::new(vec![rows, chunk_size], data).expect("whole chunks"))
}

/// Pooled training and validation chunks built from noisy variants of `params`.
pub fn variant_chunks(params: &ParamSet, chunk_size: usize, augment: &AugmentConfig) -> Result<(Tensor, Tensor), CodecError> {
    let v = generate_variants(&flatten(params), augment);
    Ok((pool_chunks(&v.train, chunk_size)?, pool_chunks(&v.val, chunk_size)?))
}

/// Everything one pipeline run produces.
#[derive(Clone, Debug)]
pub struct PipelineRun {
    pub training: VaeTrainOutcome,
    pub archive: LatentArchive,
    pub reconstructed: ParamSet,
    pub original: Evaluation,
    pub reconstructed_eval: Evaluation,
    pub vae_train_seconds: f64,
}

impl PipelineRun {
    pub fn rate(&self) -> f64 {
        compression_rate(&self.archive)
    }

    pub fn rate_with_decoder(&self) -> f64 {
        compression_rate_with_decoder(&self.archive, &self.training.vae)
    }

    /// Absolute accuracy change from original to reconstructed weights.
    pub fn accuracy_drop(&self) -> f64 {
        self.original.accuracy() - self.reconstructed_eval.accuracy()
    }
}

/// Trains a VAE on variants of `params` and measures how well its
/// reconstruction of `params` performs on `test`.
pub fn run_pipeline(
    spec: &BaseModelSpec,
    params: &ParamSet,
    test: &MnistDataset,
    config: &PipelineConfig,
    progress: impl FnMut(&VaeEpoch),
) -> Result<PipelineRun, PipelineError> {
    spec.check(params).map_err(PipelineError::Evaluate)?;
    let (train, val) = variant_chunks(params, config.chunk_size, &config.augment).map_err(PipelineError::GenData)?;
    let started = Instant::now();
    let training = train_vae(&train, &val, &config.vae, progress).map_err(PipelineError::TrainVae)?;
    let vae_train_seconds = started.elapsed().as_secs_f64();
    let archive = compress(params, &training.vae).map_err(PipelineError::Compress)?;
    let reconstructed = decompress(&archive, &training.vae, spec).map_err(PipelineError::Decompress)?;
    let original = evaluate(spec, params, test).map_err(PipelineError::Evaluate)?;
    let reconstructed_eval = evaluate(spec, &reconstructed, test).map_err(PipelineError::Evaluate)?;
    Ok(PipelineRun { training, archive, reconstructed, original, reconstructed_eval, vae_train_seconds })
}

/// First epoch whose loss is within `factor` of the final epoch's loss.
pub fn epochs_to_within(losses: &[f64], factor: f64) -> Option<usize> {
    let last = *losses.last()?;
    losses.iter().position(|&l| l <= factor * last).map(|i| i + 1)
}
