//! Reader and writer for the raw MNIST IDX files, plus seeded batching.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::nn::Tensor;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const SIDE: usize = 28;
pub const PIXELS: usize = SIDE * SIDE;

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("label magic in image file (offset 0)")]
    LabelMagicInImageFile,
    #[error("image magic in label file (offset 0)")]
    ImageMagicInLabelFile,
    #[error("bad magic {found:#010x} at offset 0, expected {expected:#010x}")]
    BadMagic { found: u32, expected: u32 },
    #[error("truncated: need {needed} bytes at offset {offset}, file has {len}")]
    Truncated { offset: usize, needed: usize, len: usize },
    #[error("image extent {rows}x{cols} at offset 8 is not 28x28")]
    Dimensions { rows: u32, cols: u32 },
    #[error("label {value} at offset {offset} is outside 0..=9")]
    LabelRange { offset: usize, value: u8 },
    #[error("{count} trailing bytes after offset {offset}")]
    Trailing { offset: usize, count: usize },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: Box<IdxError> },
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32, IdxError> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(IdxError::Truncated { offset, needed: 4, len: bytes.len() })
}

fn body(bytes: &[u8], offset: usize, needed: usize) -> Result<&[u8], IdxError> {
    let end = offset.checked_add(needed).ok_or(IdxError::Truncated { offset, needed, len: bytes.len() })?;
    if bytes.len() < end {
        return Err(IdxError::Truncated { offset, needed, len: bytes.len() });
    }
    if bytes.len() > end {
        return Err(IdxError::Trailing { offset: end, count: bytes.len() - end });
    }
    Ok(&bytes[offset..end])
}

/// Parses an IDX3 image file into `[n, 28, 28]` with pixels scaled by 1/255.
pub fn read_idx_images(bytes: &[u8]) -> Result<Tensor, IdxError> {
    match read_u32(bytes, 0)? {
        IMAGE_MAGIC => {}
        LABEL_MAGIC => return Err(IdxError::LabelMagicInImageFile),
        found => return Err(IdxError::BadMagic { found, expected: IMAGE_MAGIC }),
    }
    let n = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)?;
    let cols = read_u32(bytes, 12)?;
    if rows as usize != SIDE || cols as usize != SIDE {
        return Err(IdxError::Dimensions { rows, cols });
    }
    let pixels = body(bytes, 16, n * PIXELS)?;
    let data = pixels.iter().map(|&p| p as f32 / 255.0).collect();
    Ok(Tensor::new(vec![n, SIDE, SIDE], data).expect("extent checked above"))
}

/// Parses an IDX1 label file.
pub fn read_idx_labels(bytes: &[u8]) -> Result<Vec<u8>, IdxError> {
    match read_u32(bytes, 0)? {
        LABEL_MAGIC => {}
        IMAGE_MAGIC => return Err(IdxError::ImageMagicInLabelFile),
        found => return Err(IdxError::BadMagic { found, expected: LABEL_MAGIC }),
    }
    let n = read_u32(bytes, 4)? as usize;
    let labels = body(bytes, 8, n)?;
    if let Some(i) = labels.iter().position(|&l| l > 9) {
        return Err(IdxError::LabelRange { offset: 8 + i, value: labels[i] });
    }
    Ok(labels.to_vec())
}

/// Serializes `[n, 28, 28]` pixels in [0, 1] back to IDX3 bytes.
///
/// Pixels are mapped with `round(v · 255)`, which inverts [`read_idx_images`]
/// exactly for tensors that came from it.
pub fn write_idx_images(images: &Tensor) -> Vec<u8> {
    let n = images.shape().first().copied().unwrap_or(0);
    let mut out = Vec::with_capacity(16 + images.len());
    for v in [IMAGE_MAGIC, n as u32, SIDE as u32, SIDE as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend(images.data().iter().map(|&p| (p * 255.0).round().clamp(0.0, 255.0) as u8));
    out
}

pub fn write_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Images `[n, 28, 28]` with their labels.
#[derive(Clone, Debug, PartialEq)]
pub struct MnistDataset {
    pub images: Tensor,
    pub labels: Vec<u8>,
}

impl MnistDataset {
    pub fn new(images: Tensor, labels: Vec<u8>) -> Result<Self, IdxError> {
        let n = images.shape().first().copied().unwrap_or(0);
        if n != labels.len() {
            return Err(IdxError::CountMismatch { images: n, labels: labels.len() });
        }
        Ok(MnistDataset { images, labels })
    }

    pub fn from_bytes(images: &[u8], labels: &[u8]) -> Result<Self, IdxError> {
        MnistDataset::new(read_idx_images(images)?, read_idx_labels(labels)?)
    }

    pub fn from_files(images: &Path, labels: &Path) -> Result<Self, IdxError> {
        let read = |p: &Path| fs::read(p).map_err(|source| IdxError::Io { path: p.to_path_buf(), source });
        let wrap = |p: &Path, e: IdxError| IdxError::Parse { path: p.to_path_buf(), source: Box::new(e) };
        let img = read_idx_images(&read(images)?).map_err(|e| wrap(images, e))?;
        let lab = read_idx_labels(&read(labels)?).map_err(|e| wrap(labels, e))?;
        MnistDataset::new(img, lab)
    }

    /// Loads `(train, test)` from a directory holding the four standard files.
    pub fn load_dir(dir: &Path) -> Result<(MnistDataset, MnistDataset), IdxError> {
        let train = MnistDataset::from_files(&dir.join(TRAIN_IMAGES), &dir.join(TRAIN_LABELS))?;
        let test = MnistDataset::from_files(&dir.join(TEST_IMAGES), &dir.join(TEST_LABELS))?;
        Ok((train, test))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Subset in the order given by `idx`.
    pub fn select(&self, idx: &[usize]) -> MnistDataset {
        MnistDataset {
            images: self.images.gather_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Splits off the last `n` examples, returning `(head, tail)`.
    pub fn split_tail(&self, n: usize) -> (MnistDataset, MnistDataset) {
        let cut = self.len().saturating_sub(n);
        let head: Vec<usize> = (0..cut).collect();
        let tail: Vec<usize> = (cut..self.len()).collect();
        (self.select(&head), self.select(&tail))
    }

    /// Seeded shuffled partition into batches; the last one may be short.
    pub fn batches(&self, batch_size: usize, seed: u64) -> Batches<'_> {
        Batches { data: self, order: shuffled_indices(self.len(), seed), batch_size: batch_size.max(1), pos: 0 }
    }
}

/// `0..n` shuffled with a ChaCha8 stream seeded by `seed`.
pub fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

/// Iterator returned by [`MnistDataset::batches`].
pub struct Batches<'a> {
    data: &'a MnistDataset,
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
}

impl Iterator for Batches<'_> {
    type Item = (Tensor, Vec<u8>);

    fn next(&mut self) -> Option<Self::Item> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let idx = &self.order[self.pos..end];
        self.pos = end;
        let sub = self.data.select(idx);
        Some((sub.images, sub.labels))
    }
}
