//! The four reference MNIST classifiers whose parameters get compressed.
//!
//! Block order (the canonical flattening order) is forward layer order with
//! weights before biases:
//!
//! | kind | blocks |
//! |------|--------|
//! | FNN  | `fc{1..5}.w [in, out]`, `fc{1..5}.b` for 784→200→100→60→30→10 |
//! | CNN  | `conv{1..3}.k [out, in, kh, kw]`, `conv{1..3}.b`, `fc{1,2}.w`, `fc{1,2}.b` |
//! | RNN  | per layer `w_ih`, `w_hh`, `b_ih`, `b_hh`, then `fc.w`, `fc.b` |
//! | LSTM | as RNN, with gate columns ordered i, f, g, o |
//!
//! The CNN stack is conv 1→4 5×5 (same) → pool → conv 4→8 5×5 (same) → pool
//! → conv 8→12 4×4 (padding 1 before, 2 after) → dense 588→200→10, ReLU
//! throughout. Recurrent models read an image as 28 steps of 28 pixels (one
//! row per step).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mnist::MnistDataset;
use crate::nn::{
    softmax_cross_entropy, Adam, AdamConfig, Layer, ModelKind, Network, NnError, Padding, ParamSet, Tensor,
};

pub const CLASSES: usize = 10;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{0} is not a base classifier kind")]
    NotBaseKind(ModelKind),
    #[error("parameter set is for {found}, model is {expected}")]
    KindMismatch { expected: ModelKind, found: ModelKind },
    #[error("parameter layout mismatch at block {index}: expected {expected}, found {found}")]
    Layout { index: usize, expected: String, found: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("training diverged at epoch {epoch} (non-finite loss)")]
    Diverged { epoch: usize },
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Architecture of one base classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct BaseModelSpec {
    pub kind: ModelKind,
    pub network: Network,
    layout: Vec<(String, Vec<usize>)>,
}

impl BaseModelSpec {
    pub fn new(kind: ModelKind) -> Result<Self, ModelError> {
        let (network, params) = architecture(kind, 0)?;
        Ok(BaseModelSpec { kind, network, layout: params.layout() })
    }

    /// `(block name, shape)` in canonical order.
    pub fn layout(&self) -> &[(String, Vec<usize>)] {
        &self.layout
    }

    pub fn num_params(&self) -> usize {
        self.layout.iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }

    /// Confirms `params` has this model's kind and exact block layout.
    pub fn check(&self, params: &ParamSet) -> Result<(), ModelError> {
        if params.kind != self.kind {
            return Err(ModelError::KindMismatch { expected: self.kind, found: params.kind });
        }
        let found = params.layout();
        for i in 0..self.layout.len().max(found.len()) {
            let e = self.layout.get(i);
            let f = found.get(i);
            if e != f {
                let show = |b: Option<&(String, Vec<usize>)>| b.map_or("nothing".to_string(), |(n, s)| format!("{n} {s:?}"));
                return Err(ModelError::Layout { index: i, expected: show(e), found: show(f) });
            }
        }
        Ok(())
    }

    pub fn logits(&self, params: &ParamSet, images: &Tensor) -> Result<Tensor, ModelError> {
        Ok(self.network.forward(params, images)?)
    }
}

fn dense(p: &mut ParamSet, rng: &mut ChaCha8Rng, name: &str, fan_in: usize, fan_out: usize) -> Layer {
    let bound = 1.0 / (fan_in as f32).sqrt();
    let w = p.push(format!("{name}.w"), Tensor::uniform(&[fan_in, fan_out], bound, rng));
    let b = p.push(format!("{name}.b"), Tensor::uniform(&[fan_out], bound, rng));
    Layer::Dense { w, b }
}

fn conv(p: &mut ParamSet, rng: &mut ChaCha8Rng, name: &str, cin: usize, cout: usize, k: usize, pad: Padding) -> Layer {
    let bound = 1.0 / ((cin * k * k) as f32).sqrt();
    let kk = p.push(format!("{name}.k"), Tensor::uniform(&[cout, cin, k, k], bound, rng));
    let b = p.push(format!("{name}.b"), Tensor::uniform(&[cout], bound, rng));
    Layer::Conv2d { k: kk, b, stride: 1, pad }
}

fn recurrent(p: &mut ParamSet, rng: &mut ChaCha8Rng, name: &str, fan_in: usize, hid: usize, gates: usize) -> Layer {
    let bound = 1.0 / (hid as f32).sqrt();
    let w_ih = p.push(format!("{name}.w_ih"), Tensor::uniform(&[fan_in, gates * hid], bound, rng));
    let w_hh = p.push(format!("{name}.w_hh"), Tensor::uniform(&[hid, gates * hid], bound, rng));
    let b_ih = p.push(format!("{name}.b_ih"), Tensor::uniform(&[gates * hid], bound, rng));
    let b_hh = p.push(format!("{name}.b_hh"), Tensor::uniform(&[gates * hid], bound, rng));
    if gates == 4 {
        Layer::Lstm { w_ih, w_hh, b_ih, b_hh }
    } else {
        Layer::Rnn { w_ih, w_hh, b_ih, b_hh }
    }
}

fn architecture(kind: ModelKind, seed: u64) -> Result<(Network, ParamSet), ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ParamSet::new(kind);
    let r = &mut rng;
    let layers = match kind {
        ModelKind::Fnn => {
            let sizes = [784, 200, 100, 60, 30, 10];
            let mut layers = vec![Layer::Reshape(vec![784])];
            for (i, w) in sizes.windows(2).enumerate() {
                layers.push(dense(&mut p, r, &format!("fc{}", i + 1), w[0], w[1]));
                if i + 2 < sizes.len() {
                    layers.push(Layer::Relu);
                }
            }
            layers
        }
        ModelKind::Cnn => vec![
            Layer::Reshape(vec![1, 28, 28]),
            conv(&mut p, r, "conv1", 1, 4, 5, Padding::uniform(2)),
            Layer::Relu,
            Layer::MaxPool2,
            conv(&mut p, r, "conv2", 4, 8, 5, Padding::uniform(2)),
            Layer::Relu,
            Layer::MaxPool2,
            conv(&mut p, r, "conv3", 8, 12, 4, Padding { top: 1, bottom: 2, left: 1, right: 2 }),
            Layer::Relu,
            Layer::Reshape(vec![588]),
            dense(&mut p, r, "fc1", 588, 200),
            Layer::Relu,
            dense(&mut p, r, "fc2", 200, 10),
        ],
        ModelKind::Rnn | ModelKind::Lstm => {
            let gates = if kind == ModelKind::Lstm { 4 } else { 1 };
            let (l1, l2) = if gates == 4 { ("lstm1", "lstm2") } else { ("rnn1", "rnn2") };
            vec![
                recurrent(&mut p, r, l1, 28, 128, gates),
                recurrent(&mut p, r, l2, 128, 128, gates),
                Layer::LastStep,
                dense(&mut p, r, "fc", 128, 10),
            ]
        }
        ModelKind::Vae => return Err(ModelError::NotBaseKind(kind)),
    };
    Ok((Network::new(layers), p))
}

/// Architecture plus freshly initialized parameters (PyTorch-style uniform
/// fan-in initialization).
pub fn build_model(kind: ModelKind, seed: u64) -> Result<(BaseModelSpec, ParamSet), ModelError> {
    let (network, params) = architecture(kind, seed)?;
    Ok((BaseModelSpec { kind, network, layout: params.layout() }, params))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaseTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f32,
    /// Stop after this many epochs without a validation-accuracy gain.
    pub patience: usize,
    /// Rescale the gradient when its global L2 norm exceeds this.
    pub clip_norm: Option<f32>,
    pub seed: u64,
    /// Examples held out from the end of the training set for validation.
    pub val_size: usize,
}

impl Default for BaseTrainConfig {
    fn default() -> Self {
        BaseTrainConfig { epochs: 10, batch_size: 64, lr: 1e-3, patience: 2, clip_norm: Some(5.0), seed: 1, val_size: 5000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f32,
    pub val_loss: f32,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub params: ParamSet,
    pub metrics: Vec<EpochMetrics>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
}

/// Trains with Adam on softmax cross-entropy and keeps the parameters of the
/// epoch with the best validation accuracy.
pub fn train_base(
    spec: &BaseModelSpec,
    init: ParamSet,
    train: &MnistDataset,
    config: &BaseTrainConfig,
    mut progress: impl FnMut(&EpochMetrics),
) -> Result<TrainedModel, ModelError> {
    spec.check(&init)?;
    if train.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let (fit, val) = if config.val_size > 0 && config.val_size < train.len() {
        train.split_tail(config.val_size)
    } else {
        (train.clone(), train.clone())
    };
    let mut params = init;
    let mut opt = Adam::new(&params, AdamConfig { lr: config.lr, ..AdamConfig::default() });
    let mut best = (params.clone(), f64::NEG_INFINITY, 0);
    let mut metrics = Vec::new();
    for epoch in 1..=config.epochs {
        let mut loss_sum = 0.0f64;
        for (images, labels) in fit.batches(config.batch_size, config.seed.wrapping_add(epoch as u64)) {
            let (logits, tape) = spec.network.forward_train(&params, &images)?;
            let ce = softmax_cross_entropy(&logits, &labels)?;
            if !ce.loss.is_finite() {
                return Err(ModelError::Diverged { epoch });
            }
            loss_sum += ce.loss as f64 * labels.len() as f64;
            let mut grads = params.zeros_like();
            spec.network.backward(&params, &tape, &ce.grad, &mut grads)?;
            if let Some(max) = config.clip_norm {
                let norm = grads.global_norm();
                if norm > max as f64 {
                    grads.scale((max as f64 / norm) as f32);
                }
            }
            opt.step(&mut params, &grads).map_err(|e| match e {
                NnError::NonFiniteGradient(_) => ModelError::Diverged { epoch },
                e => e.into(),
            })?;
        }
        let eval = evaluate(spec, &params, &val)?;
        if !eval.loss.is_finite() {
            return Err(ModelError::Diverged { epoch });
        }
        let m = EpochMetrics {
            epoch,
            train_loss: (loss_sum / fit.len() as f64) as f32,
            val_loss: eval.loss,
            val_accuracy: eval.accuracy(),
        };
        progress(&m);
        metrics.push(m);
        if eval.accuracy() > best.1 {
            best = (params.clone(), eval.accuracy(), epoch);
        } else if epoch - best.2 >= config.patience {
            break;
        }
    }
    let (params, _, best_epoch) = best;
    Ok(TrainedModel { params, metrics, best_epoch })
}

/// Prediction summary over a labelled dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub correct: usize,
    pub total: usize,
    pub loss: f32,
    /// `(correct, total)` per true class.
    pub per_class: [(usize, usize); CLASSES],
}

impl Evaluation {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

const EVAL_BATCH: usize = 500;

/// Argmax accuracy, mean loss and per-class counts. Processes the data in
/// its stored order, in fixed-size batches.
pub fn evaluate(spec: &BaseModelSpec, params: &ParamSet, data: &MnistDataset) -> Result<Evaluation, ModelError> {
    spec.check(params)?;
    let mut per_class = [(0, 0); CLASSES];
    let mut correct = 0;
    let mut loss = 0.0f64;
    let n = data.len();
    let mut start = 0;
    while start < n {
        let end = (start + EVAL_BATCH).min(n);
        let logits = spec.logits(params, &data.images.slice_rows(start, end))?;
        let labels = &data.labels[start..end];
        let ce = softmax_cross_entropy(&logits, labels)?;
        loss += ce.loss as f64 * labels.len() as f64;
        for (row, &label) in logits.data().chunks_exact(CLASSES).zip(labels) {
            let pred = argmax(row);
            let slot = &mut per_class[label as usize];
            slot.1 += 1;
            if pred == label as usize {
                slot.0 += 1;
                correct += 1;
            }
        }
        start = end;
    }
    Ok(Evaluation { correct, total: n, loss: if n == 0 { 0.0 } else { (loss / n as f64) as f32 }, per_class })
}

/// Fraction of examples whose argmax logit matches the label.
pub fn evaluate_accuracy(spec: &BaseModelSpec, params: &ParamSet, data: &MnistDataset) -> Result<f64, ModelError> {
    Ok(evaluate(spec, params, data)?.accuracy())
}

fn argmax(row: &[f32]) -> usize {
    row.iter().enumerate().fold((0, f32::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc }).0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_counts_match_reference_table() {
        let want = [(ModelKind::Fnn, 185_300), (ModelKind::Cnn, 122_270), (ModelKind::Rnn, 54_538), (ModelKind::Lstm, 214_282)];
        for (kind, count) in want {
            let (spec, params) = build_model(kind, 0).unwrap();
            assert_eq!(params.num_params(), count, "{kind}");
            assert_eq!(spec.num_params(), count, "{kind}");
        }
    }

    #[test]
    fn vae_is_not_a_base_model() {
        assert!(matches!(build_model(ModelKind::Vae, 0), Err(ModelError::NotBaseKind(_))));
    }

    #[test]
    fn forward_shapes() {
        let images = Tensor::filled(&[3, 28, 28], 0.5);
        for kind in ModelKind::BASE {
            let (spec, params) = build_model(kind, 3).unwrap();
            let logits = spec.logits(&params, &images).unwrap();
            assert_eq!(logits.shape(), &[3, 10], "{kind}");
            assert!(logits.is_finite());
        }
    }

    #[test]
    fn check_rejects_foreign_layout() {
        let (fnn, _) = build_model(ModelKind::Fnn, 0).unwrap();
        let (_, cnn_params) = build_model(ModelKind::Cnn, 0).unwrap();
        assert!(matches!(fnn.check(&cnn_params), Err(ModelError::KindMismatch { .. })));
        let (_, mut p) = build_model(ModelKind::Fnn, 0).unwrap();
        p.blocks_mut()[2].value = Tensor::zeros(&[200, 99]);
        assert!(matches!(fnn.check(&p), Err(ModelError::Layout { index: 2, .. })));
    }

    #[test]
    fn saturated_correct_logit_scores_one() {
        let (spec, mut params) = build_model(ModelKind::Fnn, 0).unwrap();
        for b in params.blocks_mut() {
            b.value.data_mut().fill(0.0);
        }
        params.blocks_mut()[9].value.data_mut()[4] = 100.0;
        let data = MnistDataset::new(Tensor::zeros(&[1, 28, 28]), vec![4]).unwrap();
        assert_eq!(evaluate_accuracy(&spec, &params, &data).unwrap(), 1.0);
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let (spec, params) = build_model(ModelKind::Fnn, 5).unwrap();
        let images = Tensor::new(vec![20, 28, 28], (0..20 * 784).map(|i| ((i * 7) % 13) as f32 / 13.0).collect()).unwrap();
        let data = MnistDataset::new(images, (0..20).map(|i| (i % 10) as u8).collect()).unwrap();
        let cfg = BaseTrainConfig { epochs: 2, lr: 0.0, val_size: 5, patience: 5, ..BaseTrainConfig::default() };
        let out = train_base(&spec, params.clone(), &data, &cfg, |_| {}).unwrap();
        assert_eq!(out.params, params);
    }
}
