use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{NnError, Tensor};

/// Which network a parameter set belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Fnn,
    Cnn,
    Rnn,
    Lstm,
    Vae,
}

impl ModelKind {
    pub const BASE: [ModelKind; 4] = [ModelKind::Fnn, ModelKind::Cnn, ModelKind::Rnn, ModelKind::Lstm];

    /// Tag byte used by the binary containers.
    pub fn tag(self) -> u8 {
        match self {
            ModelKind::Fnn => 1,
            ModelKind::Cnn => 2,
            ModelKind::Rnn => 3,
            ModelKind::Lstm => 4,
            ModelKind::Vae => 5,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            1 => ModelKind::Fnn,
            2 => ModelKind::Cnn,
            3 => ModelKind::Rnn,
            4 => ModelKind::Lstm,
            5 => ModelKind::Vae,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Fnn => "fnn",
            ModelKind::Cnn => "cnn",
            ModelKind::Rnn => "rnn",
            ModelKind::Lstm => "lstm",
            ModelKind::Vae => "vae",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fnn" => Ok(ModelKind::Fnn),
            "cnn" => Ok(ModelKind::Cnn),
            "rnn" => Ok(ModelKind::Rnn),
            "lstm" => Ok(ModelKind::Lstm),
            "vae" => Ok(ModelKind::Vae),
            other => Err(format!("unknown model kind `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamBlock {
    pub name: String,
    pub value: Tensor,
}

/// Ordered, named parameter blocks of one network.
///
/// Block order is the canonical flattening order; layers address blocks by
/// index.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet {
    pub kind: ModelKind,
    blocks: Vec<ParamBlock>,
}

impl ParamSet {
    pub fn new(kind: ModelKind) -> Self {
        ParamSet { kind, blocks: Vec::new() }
    }

    pub fn from_blocks(kind: ModelKind, blocks: Vec<ParamBlock>) -> Self {
        ParamSet { kind, blocks }
    }

    /// Appends a block and returns its index.
    pub fn push(&mut self, name: impl Into<String>, value: Tensor) -> usize {
        self.blocks.push(ParamBlock { name: name.into(), value });
        self.blocks.len() - 1
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [ParamBlock] {
        &mut self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn get(&self, idx: usize) -> &Tensor {
        &self.blocks[idx].value
    }

    pub fn find(&self, name: &str) -> Option<&Tensor> {
        self.blocks.iter().find(|b| b.name == name).map(|b| &b.value)
    }

    /// Total scalar parameter count.
    pub fn num_params(&self) -> usize {
        self.blocks.iter().map(|b| b.value.len()).sum()
    }

    /// `(name, shape)` of every block, in order.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        self.blocks.iter().map(|b| (b.name.clone(), b.value.shape().to_vec())).collect()
    }

    pub fn zeros_like(&self) -> Grads {
        Grads { blocks: self.blocks.iter().map(|b| Tensor::zeros(b.value.shape())).collect() }
    }
}

/// Gradient tensors aligned block-for-block with a [`ParamSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct Grads {
    pub blocks: Vec<Tensor>,
}

impl Grads {
    /// Adds `g` into block `idx`, checking the shape.
    pub fn accumulate(&mut self, idx: usize, g: &Tensor) -> Result<(), NnError> {
        let dst = &mut self.blocks[idx];
        if dst.shape() != g.shape() {
            return Err(NnError::shape(
                "Grads::accumulate",
                format!("block {idx}: {:?} vs {:?}", dst.shape(), g.shape()),
            ));
        }
        for (d, s) in dst.data_mut().iter_mut().zip(g.data()) {
            *d += s;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f32) {
        for b in &mut self.blocks {
            for v in b.data_mut() {
                *v *= factor;
            }
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|b| b.data().iter())
            .map(|&v| (v as f64) * (v as f64))
            .sum::<f64>()
            .sqrt()
    }
}
