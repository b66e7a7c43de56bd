//! Test-only oracles: central finite differences, Monte-Carlo KL, and
//! parameter-count enumeration. None of these call into the code paths they
//! check beyond the forward passes.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use vaepack::nn::*;
use vaepack::vae::{Standardizer, VaeArch, VaeParams};

pub const FD_STEP: f32 = 1e-3;
pub const FD_TOLERANCE: f64 = 1e-3;

/// `‖a − n‖ / max(‖a‖, ‖n‖)`, or 0 when both vanish.
pub fn rel_err(analytic: &[f32], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(&a, &n)| (a as f64 - n).powi(2)).sum::<f64>().sqrt();
    let na: f64 = analytic.iter().map(|&a| (a as f64).powi(2)).sum::<f64>().sqrt();
    let nn: f64 = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    let scale = na.max(nn);
    if scale < 1e-12 {
        0.0
    } else {
        diff / scale
    }
}

/// Central differences of `loss` w.r.t. every element of `x`, using the
/// actually representable f32 step.
pub fn numeric_grad(x: &mut [f32], mut loss: impl FnMut(&[f32]) -> f64) -> Vec<f64> {
    let mut g = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = x[i];
        let plus = orig + FD_STEP;
        let minus = orig - FD_STEP;
        x[i] = plus;
        let lp = loss(x);
        x[i] = minus;
        let lm = loss(x);
        x[i] = orig;
        g.push((lp - lm) / (plus as f64 - minus as f64));
    }
    g
}

pub fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f32) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

/// Scalar reduction `Σ r ⊙ y` in f64 with fixed random weights `r`.
pub fn weighted_sum(y: &Tensor, r: &[f32]) -> f64 {
    y.data().iter().zip(r).map(|(&a, &b)| a as f64 * b as f64).sum()
}

fn weights_for(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Checks the network's tape-based gradients against finite differences.
/// The relative error is taken over the whole gradient: every parameter
/// block followed by the input.
pub fn check_network(net: &Network, params: &ParamSet, input: &Tensor, rng: &mut ChaCha8Rng) -> f64 {
    let y = net.forward(params, input).unwrap();
    let r = weights_for(rng, y.len());
    let (_, tape) = net.forward_train(params, input).unwrap();
    let upstream = Tensor::new(y.shape().to_vec(), r.clone()).unwrap();
    let mut grads = params.zeros_like();
    let dx = net.backward(params, &tape, &upstream, &mut grads).unwrap();

    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for b in 0..params.len() {
        let mut p = params.clone();
        let mut data = p.get(b).data().to_vec();
        numeric.extend(numeric_grad(&mut data, |d| {
            p.blocks_mut()[b].value.data_mut().copy_from_slice(d);
            weighted_sum(&net.forward(&p, input).unwrap(), &r)
        }));
        analytic.extend_from_slice(grads.blocks[b].data());
    }
    let mut xin = input.data().to_vec();
    numeric.extend(numeric_grad(&mut xin, |d| {
        let x = Tensor::new(input.shape().to_vec(), d.to_vec()).unwrap();
        weighted_sum(&net.forward(params, &x).unwrap(), &r)
    }));
    analytic.extend_from_slice(dx.data());
    rel_err(&analytic, &numeric)
}

pub fn small(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> usize {
    rng.random_range(lo..=hi)
}

pub fn dense_case(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (batch, fan_in, fan_out) = (small(&mut rng, 1, 4), small(&mut rng, 1, 8), small(&mut rng, 1, 8));
    let mut p = ParamSet::new(ModelKind::Fnn);
    let w = p.push("w", rand_tensor(&mut rng, &[fan_in, fan_out], 1.0));
    let b = p.push("b", rand_tensor(&mut rng, &[fan_out], 1.0));
    let x = rand_tensor(&mut rng, &[batch, fan_in], 1.0);
    check_network(&Network::new(vec![Layer::Dense { w, b }]), &p, &x, &mut rng)
}

pub fn conv_case(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = small(&mut rng, 1, 4);
    let stride = small(&mut rng, 1, 2);
    let pad = Padding {
        top: small(&mut rng, 0, 2),
        bottom: small(&mut rng, 0, 2),
        left: small(&mut rng, 0, 2),
        right: small(&mut rng, 0, 2),
    };
    // Choose the output extent first so the input extent is always valid.
    let oh = small(&mut rng, 1, 4);
    let ow = small(&mut rng, 1, 4);
    let h = ((oh - 1) * stride + k).saturating_sub(pad.top + pad.bottom).max(1);
    let w = ((ow - 1) * stride + k).saturating_sub(pad.left + pad.right).max(1);
    let h = h + ((h + pad.top + pad.bottom).saturating_sub(k)) % stride;
    let w = w + ((w + pad.left + pad.right).saturating_sub(k)) % stride;
    let (batch, cin, cout) = (small(&mut rng, 1, 2), small(&mut rng, 1, 3), small(&mut rng, 1, 3));
    let mut p = ParamSet::new(ModelKind::Cnn);
    let kk = p.push("k", rand_tensor(&mut rng, &[cout, cin, k, k], 1.0));
    let b = p.push("b", rand_tensor(&mut rng, &[cout], 1.0));
    let x = rand_tensor(&mut rng, &[batch, cin, h.max(k.saturating_sub(pad.top + pad.bottom)), w.max(k.saturating_sub(pad.left + pad.right))], 1.0);
    let net = Network::new(vec![Layer::Conv2d { k: kk, b, stride, pad }]);
    if net.forward(&p, &x).is_err() {
        // Geometry not realizable with this stride; fall back to stride 1.
        let net = Network::new(vec![Layer::Conv2d { k: kk, b, stride: 1, pad }]);
        return check_network(&net, &p, &x, &mut rng);
    }
    check_network(&net, &p, &x, &mut rng)
}

/// Max-pool over well-separated values so no window has a near tie.
pub fn pool_case(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (batch, c, h, w) = (small(&mut rng, 1, 2), small(&mut rng, 1, 3), 2 * small(&mut rng, 1, 4), 2 * small(&mut rng, 1, 4));
    let n = batch * c * h * w;
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let data = order.iter().map(|&v| v as f32 * 0.05 + rng.random_range(-0.01..0.01)).collect();
    let x = Tensor::new(vec![batch, c, h, w], data).unwrap();
    let p = ParamSet::new(ModelKind::Cnn);
    check_network(&Network::new(vec![Layer::MaxPool2]), &p, &x, &mut rng)
}

pub fn recurrent_case(seed: u64, lstm: bool) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (batch, steps, fan_in, hid) = (small(&mut rng, 1, 3), small(&mut rng, 1, 4), small(&mut rng, 1, 5), small(&mut rng, 1, 5));
    let gates = if lstm { 4 } else { 1 };
    let mut p = ParamSet::new(if lstm { ModelKind::Lstm } else { ModelKind::Rnn });
    let w_ih = p.push("w_ih", rand_tensor(&mut rng, &[fan_in, gates * hid], 0.8));
    let w_hh = p.push("w_hh", rand_tensor(&mut rng, &[hid, gates * hid], 0.8));
    let b_ih = p.push("b_ih", rand_tensor(&mut rng, &[gates * hid], 0.5));
    let b_hh = p.push("b_hh", rand_tensor(&mut rng, &[gates * hid], 0.5));
    let layer = if lstm { Layer::Lstm { w_ih, w_hh, b_ih, b_hh } } else { Layer::Rnn { w_ih, w_hh, b_ih, b_hh } };
    let x = rand_tensor(&mut rng, &[batch, steps, fan_in], 1.0);
    check_network(&Network::new(vec![layer]), &p, &x, &mut rng)
}

/// Smallest `|pre-activation|` over every ReLU unit of the VAE for this
/// batch. Central differences are only valid when no unit sits within a
/// step of its kink.
pub fn relu_margin(vae: &VaeParams, x: &Tensor, eps: &Tensor) -> f32 {
    let p = &vae.params;
    let block = |n: &str| p.find(n).unwrap();
    let mut margin = f32::INFINITY;
    let mut stack = |h: Tensor, names: &[String]| {
        let mut h = h;
        for n in names {
            let pre = dense_forward(&h, block(&format!("{n}.w")), block(&format!("{n}.b"))).unwrap();
            margin = pre.data().iter().fold(margin, |m, v| m.min(v.abs()));
            h = pre.map(|v| v.max(0.0));
        }
        h
    };
    let depth = vae.arch.hidden.len();
    let enc: Vec<String> = (1..=depth).map(|i| format!("enc{i}")).collect();
    let dec: Vec<String> = (1..=depth).map(|i| format!("dec{i}")).collect();
    let h = stack(vae.norm.apply(x), &enc);
    let mu = dense_forward(&h, block("mu.w"), block("mu.b")).unwrap();
    let lv = dense_forward(&h, block("logvar.w"), block("logvar.b")).unwrap();
    let z = vaepack::vae::reparameterize(&mu, &lv, eps).unwrap();
    stack(z, &dec);
    margin
}

pub const KINK_MARGIN: f32 = 0.01;

/// Full negative-ELBO gradient on a toy VAE with 8-wide inputs, at a point
/// whose ReLU units are all at least [`KINK_MARGIN`] from zero.
pub fn elbo_case(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vae = VaeParams::init(VaeArch { input_dim: 8, hidden: vec![7, 5], latent_dim: 3 }, seed);
    if seed % 2 == 1 {
        vae.norm = Standardizer { shift: 0.1, scale: 0.7 };
    }
    let batch = small(&mut rng, 1, 3);
    let (x, eps) = (0..10_000)
        .map(|_| {
            let x = rand_tensor(&mut rng, &[batch, 8], 1.0);
            let eps = Tensor::new(vec![batch, 3], (0..batch * 3).map(|_| StandardNormal.sample(&mut rng)).collect()).unwrap();
            (x, eps)
        })
        .find(|(x, eps)| relu_margin(&vae, x, eps) > KINK_MARGIN)
        .expect("a kink-free point");
    let (_, grads) = vae.loss_and_grads(&x, &eps).unwrap();
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for b in 0..vae.params.len() {
        let mut probe = vae.clone();
        let mut data = vae.params.get(b).data().to_vec();
        numeric.extend(numeric_grad(&mut data, |d| {
            probe.params.blocks_mut()[b].value.data_mut().copy_from_slice(d);
            probe.loss(&x, &eps).unwrap().total
        }));
        analytic.extend_from_slice(grads.blocks[b].data());
    }
    rel_err(&analytic, &numeric)
}

/// Monte-Carlo estimate of `E_q[log q(z) − log p(z)]` for a diagonal
/// Gaussian `q`, with its standard error.
pub fn kl_monte_carlo(mu: &[f64], logvar: &[f64], samples: usize, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        let mut v = 0.0;
        for (&m, &lv) in mu.iter().zip(logvar) {
            let sigma = (0.5 * lv).exp();
            let e: f64 = StandardNormal.sample(rng);
            let z = m + sigma * e;
            let log_q = -0.5 * (e * e) - 0.5 * lv;
            let log_p = -0.5 * z * z;
            v += log_q - log_p;
        }
        sum += v;
        sum_sq += v * v;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Parameter count of each architecture, enumerated layer by layer from the
/// published neuron counts (independent of the model builder).
pub fn expected_param_count(kind: ModelKind) -> usize {
    let dense = |i: usize, o: usize| i * o + o;
    let conv = |ci: usize, co: usize, k: usize| co * ci * k * k + co;
    let rnn = |i: usize, h: usize, gates: usize| gates * (i * h + h * h + 2 * h);
    match kind {
        ModelKind::Fnn => [784, 200, 100, 60, 30, 10].windows(2).map(|w| dense(w[0], w[1])).sum(),
        ModelKind::Cnn => conv(1, 4, 5) + conv(4, 8, 5) + conv(8, 12, 4) + dense(588, 200) + dense(200, 10),
        ModelKind::Rnn => rnn(28, 128, 1) + rnn(128, 128, 1) + dense(128, 10),
        ModelKind::Lstm => rnn(28, 128, 4) + rnn(128, 128, 4) + dense(128, 10),
        ModelKind::Vae => unreachable!(),
    }
}
