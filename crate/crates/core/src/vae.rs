//! Fully-connected variational autoencoder over fixed-length parameter
//! chunks.
//!
//! ```text
//! x ─ enc (dense+ReLU)* ─┬─ μ head ──────┐
//!                        └─ log σ² head ─┴─ z = μ + exp(½·log σ²)·ε ─ dec (dense+ReLU)* ─ dense ─ x̂
//! ```
//!
//! The loss is the negative ELBO with a unit-variance Gaussian likelihood:
//! `½·Σ(x − x̂)² + Σ ½(μ² + σ² − 1 − log σ²)`, summed over the batch.
//!
//! Inputs pass through a [`Standardizer`] first, and the decoder output is
//! mapped back, so the loss is measured on standardized values. Trained
//! network weights have an RMS well below one; on raw values the
//! reconstruction term is too weak against the KL term and the posterior
//! collapses to the prior. The identity standardizer gives the plain loss.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{
    dense_backward, dense_forward, Adam, AdamConfig, Grads, Layer, ModelKind, Network, NnError, ParamSet, Tensor,
};
use crate::weights::VaeHeader;

/// `log σ²` is clamped to this range before exponentiation.
pub const LOGVAR_CLAMP: f32 = 20.0;

#[derive(Debug, Error)]
pub enum VaeError {
    #[error("non-finite loss at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("no training chunks")]
    EmptyTrainingSet,
    #[error("chunk width {found} does not match VAE input {expected}")]
    Width { expected: usize, found: usize },
    #[error("VAE parameter layout does not match its architecture: {0}")]
    Layout(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Layer widths of a VAE.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VaeArch {
    pub input_dim: usize,
    /// Encoder widths, input side first. The decoder mirrors them.
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
}

impl VaeArch {
    pub fn new(input_dim: usize, latent_dim: usize) -> Self {
        VaeArch { input_dim, hidden: vec![512, 256], latent_dim }
    }

    pub fn header(&self) -> VaeHeader {
        VaeHeader { chunk_size: self.input_dim as u32, latent_dim: self.latent_dim as u32 }
    }
}

/// Affine map `x ↦ (x − shift) / scale` applied before encoding and
/// inverted after decoding.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub shift: f32,
    pub scale: f32,
}

impl Default for Standardizer {
    fn default() -> Self {
        Standardizer::IDENTITY
    }
}

impl Standardizer {
    pub const IDENTITY: Standardizer = Standardizer { shift: 0.0, scale: 1.0 };
    /// Name of the weight block that stores `[shift, scale]`.
    pub const BLOCK: &'static str = "norm";

    /// Mean and population standard deviation of every value in `x`. A
    /// constant input keeps unit scale.
    pub fn fit(x: &Tensor) -> Self {
        let n = x.len().max(1) as f64;
        let mean = x.data().iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = x.data().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        let scale = if std > 1e-12 && std.is_finite() { std as f32 } else { 1.0 };
        Standardizer { shift: mean as f32, scale }
    }

    pub fn apply(&self, x: &Tensor) -> Tensor {
        if *self == Standardizer::IDENTITY {
            return x.clone();
        }
        x.map(|v| (v - self.shift) / self.scale)
    }

    pub fn invert(&self, x: Tensor) -> Tensor {
        if *self == Standardizer::IDENTITY {
            return x;
        }
        x.map(|v| v * self.scale + self.shift)
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Heads {
    mu: (usize, usize),
    logvar: (usize, usize),
}

/// Weights of a VAE plus the networks that address them.
///
/// Block order: `enc{i}.w/b`, `mu.w/b`, `logvar.w/b`, `dec{i}.w/b`, `out.w/b`.
#[derive(Clone, Debug, PartialEq)]
pub struct VaeParams {
    pub arch: VaeArch,
    pub params: ParamSet,
    pub norm: Standardizer,
    encoder: Network,
    heads: Heads,
    decoder: Network,
}

fn push_dense(p: &mut ParamSet, rng: &mut ChaCha8Rng, name: &str, fan_in: usize, fan_out: usize) -> (usize, usize) {
    let bound = 1.0 / (fan_in as f32).sqrt();
    let w = p.push(format!("{name}.w"), Tensor::uniform(&[fan_in, fan_out], bound, rng));
    let b = p.push(format!("{name}.b"), Tensor::uniform(&[fan_out], bound, rng));
    (w, b)
}

impl VaeParams {
    /// Fresh parameters with fan-in uniform initialization.
    pub fn init(arch: VaeArch, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamSet::new(ModelKind::Vae);
        let mut enc = Vec::new();
        let mut width = arch.input_dim;
        for (i, &h) in arch.hidden.iter().enumerate() {
            let (w, b) = push_dense(&mut p, &mut rng, &format!("enc{}", i + 1), width, h);
            enc.extend([Layer::Dense { w, b }, Layer::Relu]);
            width = h;
        }
        let mu = push_dense(&mut p, &mut rng, "mu", width, arch.latent_dim);
        let logvar = push_dense(&mut p, &mut rng, "logvar", width, arch.latent_dim);
        let mut dec = Vec::new();
        let mut width = arch.latent_dim;
        for (i, &h) in arch.hidden.iter().rev().enumerate() {
            let (w, b) = push_dense(&mut p, &mut rng, &format!("dec{}", i + 1), width, h);
            dec.extend([Layer::Dense { w, b }, Layer::Relu]);
            width = h;
        }
        let (w, b) = push_dense(&mut p, &mut rng, "out", width, arch.input_dim);
        dec.push(Layer::Dense { w, b });
        VaeParams {
            arch,
            params: p,
            norm: Standardizer::IDENTITY,
            encoder: Network::new(enc),
            heads: Heads { mu, logvar },
            decoder: Network::new(dec),
        }
    }

    /// Wraps loaded weights, checking them against `arch`.
    pub fn from_params(arch: VaeArch, params: ParamSet) -> Result<Self, VaeError> {
        let mut v = VaeParams::init(arch, 0);
        let want = v.params.layout();
        let got = params.layout();
        if params.kind != ModelKind::Vae || want != got {
            return Err(VaeError::Layout(format!("expected {} blocks {:?}, got {:?}", want.len(), want.first(), got.first())));
        }
        v.params = params;
        Ok(v)
    }

    /// Recovers the architecture from block shapes plus the stored header.
    /// A trailing `norm` block, if present, becomes the standardizer.
    pub fn from_weights(mut params: ParamSet, header: VaeHeader) -> Result<Self, VaeError> {
        let norm = match params.blocks().last() {
            Some(b) if b.name == Standardizer::BLOCK => {
                let d = b.value.data();
                if d.len() != 2 || !d[0].is_finite() || !d[1].is_finite() || d[1] <= 0.0 {
                    return Err(VaeError::Layout(format!("norm block must be [shift, scale > 0], got {d:?}")));
                }
                let n = Standardizer { shift: d[0], scale: d[1] };
                params = ParamSet::from_blocks(params.kind, params.blocks()[..params.len() - 1].to_vec());
                n
            }
            _ => Standardizer::IDENTITY,
        };
        let hidden: Vec<usize> = params
            .blocks()
            .iter()
            .filter(|b| b.name.starts_with("enc") && b.name.ends_with(".b"))
            .map(|b| b.value.len())
            .collect();
        let arch = VaeArch { input_dim: header.chunk_size as usize, hidden, latent_dim: header.latent_dim as usize };
        let mut v = VaeParams::from_params(arch, params)?;
        v.norm = norm;
        Ok(v)
    }

    /// The trainable blocks followed by the `norm` block, as written to disk.
    pub fn to_weights(&self) -> ParamSet {
        let mut p = self.params.clone();
        p.push(Standardizer::BLOCK, Tensor::from_vec(vec![self.norm.shift, self.norm.scale]));
        p
    }

    pub fn num_params(&self) -> usize {
        self.params.num_params()
    }

    /// Values the decoder needs: decoder stack, output layer and the two
    /// standardizer scalars.
    pub fn decoder_params(&self) -> usize {
        let layers: usize =
            self.params.blocks().iter().filter(|b| b.name.starts_with("dec") || b.name.starts_with("out")).map(|b| b.value.len()).sum();
        layers + 2
    }

    fn check_width(&self, x: &Tensor) -> Result<(), VaeError> {
        let (_, w) = x.dims2("vae").map_err(VaeError::Nn)?;
        if w != self.arch.input_dim {
            return Err(VaeError::Width { expected: self.arch.input_dim, found: w });
        }
        Ok(())
    }

    /// Posterior mean and log-variance for each row of `x`.
    pub fn encode(&self, x: &Tensor) -> Result<(Tensor, Tensor), VaeError> {
        self.check_width(x)?;
        self.encode_standardized(&self.norm.apply(x))
    }

    fn encode_standardized(&self, x: &Tensor) -> Result<(Tensor, Tensor), VaeError> {
        let h = self.encoder.forward(&self.params, x)?;
        let p = &self.params;
        let mu = dense_forward(&h, p.get(self.heads.mu.0), p.get(self.heads.mu.1))?;
        let logvar = dense_forward(&h, p.get(self.heads.logvar.0), p.get(self.heads.logvar.1))?;
        Ok((mu, logvar))
    }

    /// Linear-output reconstruction of every latent row.
    pub fn decode(&self, z: &Tensor) -> Result<Tensor, VaeError> {
        Ok(self.norm.invert(self.decoder.forward(&self.params, z)?))
    }

    /// Negative ELBO (on standardized values) and its gradient for a batch,
    /// given the noise `eps`.
    pub fn loss_and_grads(&self, x: &Tensor, eps: &Tensor) -> Result<(ElboBreakdown, Grads), VaeError> {
        self.check_width(x)?;
        let x = &self.norm.apply(x);
        let p = &self.params;
        let (h, enc_tape) = self.encoder.forward_train(p, x)?;
        let (mw, mb) = self.heads.mu;
        let (lw, lb) = self.heads.logvar;
        let mu = dense_forward(&h, p.get(mw), p.get(mb))?;
        let logvar = dense_forward(&h, p.get(lw), p.get(lb))?;
        let z = reparameterize(&mu, &logvar, eps)?;
        let (x_hat, dec_tape) = self.decoder.forward_train(p, &z)?;
        let loss = elbo_loss(x, &x_hat, &mu, &logvar)?;

        let mut grads = p.zeros_like();
        let mut d_xhat = x_hat;
        for (d, &t) in d_xhat.data_mut().iter_mut().zip(x.data()) {
            *d -= t;
        }
        let dz = self.decoder.backward(p, &dec_tape, &d_xhat, &mut grads)?;
        let mut d_mu = dz.clone();
        let mut d_lv = dz;
        for (((dm, dl), (&m, &lv)), &e) in d_mu
            .data_mut()
            .iter_mut()
            .zip(d_lv.data_mut())
            .zip(mu.data().iter().zip(logvar.data()))
            .zip(eps.data())
        {
            let inside = (-LOGVAR_CLAMP..=LOGVAR_CLAMP).contains(&lv);
            let var = lv.clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP).exp();
            let sigma = var.sqrt();
            *dm += m;
            *dl = if inside { *dl * e * 0.5 * sigma + 0.5 * var } else { 0.0 } - 0.5;
        }
        let gm = dense_backward(&h, p.get(mw), &d_mu)?;
        let gl = dense_backward(&h, p.get(lw), &d_lv)?;
        grads.accumulate(mw, &gm.weights)?;
        grads.accumulate(mb, &gm.bias)?;
        grads.accumulate(lw, &gl.weights)?;
        grads.accumulate(lb, &gl.bias)?;
        let mut dh = gm.input;
        for (a, b) in dh.data_mut().iter_mut().zip(gl.input.data()) {
            *a += b;
        }
        self.encoder.backward(p, &enc_tape, &dh, &mut grads)?;
        Ok((loss, grads))
    }

    /// Negative ELBO (on standardized values) without gradients.
    pub fn loss(&self, x: &Tensor, eps: &Tensor) -> Result<ElboBreakdown, VaeError> {
        self.check_width(x)?;
        let x = self.norm.apply(x);
        let (mu, logvar) = self.encode_standardized(&x)?;
        let z = reparameterize(&mu, &logvar, eps)?;
        let x_hat = self.decoder.forward(&self.params, &z)?;
        Ok(elbo_loss(&x, &x_hat, &mu, &logvar)?)
    }
}

/// `z = μ + exp(½·log σ²) ⊙ ε`.
pub fn reparameterize(mu: &Tensor, logvar: &Tensor, eps: &Tensor) -> Result<Tensor, NnError> {
    if mu.shape() != logvar.shape() || mu.shape() != eps.shape() {
        return Err(NnError::Shape {
            op: "reparameterize",
            detail: format!("μ {:?}, log σ² {:?}, ε {:?}", mu.shape(), logvar.shape(), eps.shape()),
        });
    }
    let data = mu
        .data()
        .iter()
        .zip(logvar.data())
        .zip(eps.data())
        .map(|((&m, &lv), &e)| m + (0.5 * lv.clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP)).exp() * e)
        .collect();
    Tensor::new(mu.shape().to_vec(), data)
}

/// `KL(N(μ, σ²) ‖ N(0, I))` summed over every row and dimension.
pub fn kl_divergence(mu: &Tensor, logvar: &Tensor) -> f64 {
    mu.data()
        .iter()
        .zip(logvar.data())
        .map(|(&m, &lv)| {
            let (m, lv) = (m as f64, lv as f64);
            0.5 * (m * m + lv.clamp(-LOGVAR_CLAMP as f64, LOGVAR_CLAMP as f64).exp() - 1.0 - lv)
        })
        .sum()
}

/// Terms of the negative ELBO for one batch.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct ElboBreakdown {
    pub reconstruction: f64,
    pub kl: f64,
    pub total: f64,
}

pub fn elbo_loss(x: &Tensor, x_hat: &Tensor, mu: &Tensor, logvar: &Tensor) -> Result<ElboBreakdown, NnError> {
    if x.shape() != x_hat.shape() || mu.shape() != logvar.shape() {
        return Err(NnError::Shape {
            op: "elbo_loss",
            detail: format!("x {:?}, x̂ {:?}, μ {:?}, log σ² {:?}", x.shape(), x_hat.shape(), mu.shape(), logvar.shape()),
        });
    }
    let reconstruction = 0.5 * x.data().iter().zip(x_hat.data()).map(|(&a, &b)| ((a - b) as f64).powi(2)).sum::<f64>();
    let kl = kl_divergence(mu, logvar);
    Ok(ElboBreakdown { reconstruction, kl, total: reconstruction + kl })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VaeTrainConfig {
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub batch_size: usize,
    pub lr: f32,
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub seed: u64,
    /// Fit a [`Standardizer`] to the training chunks; otherwise identity.
    pub standardize: bool,
}

impl Default for VaeTrainConfig {
    fn default() -> Self {
        VaeTrainConfig {
            max_epochs: 500,
            patience: 25,
            batch_size: 64,
            lr: 1e-3,
            latent_dim: 64,
            hidden: vec![512, 256],
            seed: 11,
            standardize: true,
        }
    }
}

/// Mean per-chunk losses after one epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VaeEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_reconstruction: f64,
    pub val_kl: f64,
}

#[derive(Clone, Debug)]
pub struct VaeTrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub vae: VaeParams,
    pub curve: Vec<VaeEpoch>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

fn normal_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect();
    Tensor::new(vec![rows, cols], data).expect("rows × cols")
}

/// Per-chunk negative ELBO over a whole set, with noise drawn from `rng`.
fn mean_loss(vae: &VaeParams, chunks: &Tensor, batch: usize, rng: &mut ChaCha8Rng) -> Result<ElboBreakdown, VaeError> {
    let n = chunks.shape()[0];
    let mut sum = ElboBreakdown::default();
    let mut start = 0;
    while start < n {
        let end = (start + batch).min(n);
        let eps = normal_tensor(rng, end - start, vae.arch.latent_dim);
        let l = vae.loss(&chunks.slice_rows(start, end), &eps)?;
        sum.reconstruction += l.reconstruction;
        sum.kl += l.kl;
        sum.total += l.total;
        start = end;
    }
    let k = n.max(1) as f64;
    Ok(ElboBreakdown { reconstruction: sum.reconstruction / k, kl: sum.kl / k, total: sum.total / k })
}

/// Trains on pooled chunks `[n, chunk_size]` with Adam, evaluating on `val`
/// after every epoch and keeping the best parameters.
///
/// Validation noise is redrawn from the same seed every epoch so epochs are
/// compared on identical `ε`. With an empty `val`, the training loss is used.
pub fn train_vae(
    train: &Tensor,
    val: &Tensor,
    config: &VaeTrainConfig,
    mut progress: impl FnMut(&VaeEpoch),
) -> Result<VaeTrainOutcome, VaeError> {
    let (n, width) = train.dims2("train_vae")?;
    if n == 0 {
        return Err(VaeError::EmptyTrainingSet);
    }
    if !val.is_empty() && val.shape()[1..] != [width] {
        return Err(VaeError::Width { expected: width, found: val.shape().get(1).copied().unwrap_or(0) });
    }
    let arch = VaeArch { input_dim: width, hidden: config.hidden.clone(), latent_dim: config.latent_dim };
    let mut vae = VaeParams::init(arch, config.seed);
    if config.standardize {
        vae.norm = Standardizer::fit(train);
    }
    let mut opt = Adam::new(&vae.params, AdamConfig { lr: config.lr, ..AdamConfig::default() });
    let mut noise = ChaCha8Rng::seed_from_u64(config.seed);
    noise.set_stream(1);
    let batch = config.batch_size.max(1);
    let mut best: Option<(VaeParams, f64, usize)> = None;
    let mut curve = Vec::new();
    let mut stopped_early = false;
    for epoch in 1..=config.max_epochs {
        let order = crate::mnist::shuffled_indices(n, config.seed.wrapping_mul(1_000_003).wrapping_add(epoch as u64));
        let mut total = 0.0;
        for idx in order.chunks(batch) {
            let x = train.gather_rows(idx);
            let eps = normal_tensor(&mut noise, idx.len(), config.latent_dim);
            let (loss, grads) = vae.loss_and_grads(&x, &eps)?;
            if !loss.total.is_finite() {
                return Err(VaeError::Diverged { epoch });
            }
            total += loss.total;
            opt.step(&mut vae.params, &grads).map_err(|e| match e {
                NnError::NonFiniteGradient(_) => VaeError::Diverged { epoch },
                e => e.into(),
            })?;
        }
        let train_loss = total / n as f64;
        let val_terms = if !val.is_empty() {
            let mut val_rng = ChaCha8Rng::seed_from_u64(config.seed);
            val_rng.set_stream(2);
            mean_loss(&vae, val, batch, &mut val_rng)?
        } else {
            ElboBreakdown { total: train_loss, ..ElboBreakdown::default() }
        };
        if !val_terms.total.is_finite() {
            return Err(VaeError::Diverged { epoch });
        }
        let e = VaeEpoch {
            epoch,
            train_loss,
            val_loss: val_terms.total,
            val_reconstruction: val_terms.reconstruction,
            val_kl: val_terms.kl,
        };
        progress(&e);
        curve.push(e);
        match &best {
            Some((_, b, _)) if val_terms.total >= *b => {}
            _ => best = Some((vae.clone(), val_terms.total, epoch)),
        }
        let best_epoch = best.as_ref().map_or(0, |b| b.2);
        if epoch - best_epoch >= config.patience && epoch < config.max_epochs {
            stopped_early = true;
            break;
        }
    }
    let (vae, best_val_loss, best_epoch) = best.unwrap_or((vae, f64::INFINITY, 0));
    Ok(VaeTrainOutcome { vae, curve, best_epoch, best_val_loss, stopped_early })
}

/// One trained VAE per latent size, all other settings shared.
pub fn latent_sweep(
    train: &Tensor,
    val: &Tensor,
    sizes: &[usize],
    config: &VaeTrainConfig,
    mut progress: impl FnMut(usize, &VaeEpoch),
) -> Result<Vec<(usize, VaeTrainOutcome)>, VaeError> {
    sizes
        .iter()
        .map(|&d| {
            let cfg = VaeTrainConfig { latent_dim: d, ..config.clone() };
            train_vae(train, val, &cfg, |e| progress(d, e)).map(|o| (d, o))
        })
        .collect()
}
