//! Sequential layer graphs over a [`ParamSet`] with a recorded tape for the
//! reverse pass.

use super::recurrent::{LstmCache, RnnCache, RnnParams};
use super::{
    conv2d_backward, conv2d_forward, dense_backward, dense_forward, lstm_layer_backward, lstm_layer_forward,
    maxpool2_backward, maxpool2_forward, rnn_layer_backward, rnn_layer_forward, Grads, NnError, Padding,
    ParamSet, PoolIndices, Tensor,
};

/// One stage of a sequential network. Parameter fields are block indices
/// into the [`ParamSet`] the network runs against.
#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Dense { w: usize, b: usize },
    Conv2d { k: usize, b: usize, stride: usize, pad: Padding },
    MaxPool2,
    Relu,
    Tanh,
    /// Reshapes every example to the given extents (batch axis kept).
    Reshape(Vec<usize>),
    Rnn { w_ih: usize, w_hh: usize, b_ih: usize, b_hh: usize },
    Lstm { w_ih: usize, w_hh: usize, b_ih: usize, b_hh: usize },
    /// `[batch, steps, hid] -> [batch, hid]`, keeping the final step.
    LastStep,
}

#[derive(Clone, Debug)]
enum Cache {
    Input(Tensor),
    Pool(PoolIndices),
    Output(Tensor),
    Shape(Vec<usize>),
    Rnn(RnnCache),
    Lstm(LstmCache),
}

/// Intermediates recorded by [`Network::forward_train`], one entry per layer.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    caches: Vec<Cache>,
}

impl Tape {
    pub fn is_empty(&self) -> bool {
        self.caches.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Network {
    pub layers: Vec<Layer>,
}

fn rnn_params(params: &ParamSet, w_ih: usize, w_hh: usize, b_ih: usize, b_hh: usize) -> RnnParams<'_> {
    RnnParams { w_ih: params.get(w_ih), w_hh: params.get(w_hh), b_ih: params.get(b_ih), b_hh: params.get(b_hh) }
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Self {
        Network { layers }
    }

    /// Inference pass; records nothing.
    pub fn forward(&self, params: &ParamSet, input: &Tensor) -> Result<Tensor, NnError> {
        self.run(params, input, None)
    }

    /// Forward pass that records what [`Network::backward`] needs.
    pub fn forward_train(&self, params: &ParamSet, input: &Tensor) -> Result<(Tensor, Tape), NnError> {
        let mut tape = Tape { caches: Vec::with_capacity(self.layers.len()) };
        let out = self.run(params, input, Some(&mut tape))?;
        Ok((out, tape))
    }

    fn run(&self, params: &ParamSet, input: &Tensor, mut tape: Option<&mut Tape>) -> Result<Tensor, NnError> {
        let mut x = input.clone();
        for layer in &self.layers {
            let (y, cache) = match layer {
                Layer::Dense { w, b } => {
                    let y = dense_forward(&x, params.get(*w), params.get(*b))?;
                    (y, Cache::Input(x))
                }
                Layer::Conv2d { k, b, stride, pad } => {
                    let y = conv2d_forward(&x, params.get(*k), params.get(*b), *stride, *pad)?;
                    (y, Cache::Input(x))
                }
                Layer::MaxPool2 => {
                    let (y, idx) = maxpool2_forward(&x)?;
                    (y, Cache::Pool(idx))
                }
                Layer::Relu => {
                    let y = x.map(|v| v.max(0.0));
                    (y.clone(), Cache::Output(y))
                }
                Layer::Tanh => {
                    let y = x.map(f32::tanh);
                    (y.clone(), Cache::Output(y))
                }
                Layer::Reshape(dims) => {
                    let in_shape = x.shape().to_vec();
                    let mut shape = vec![in_shape[0]];
                    shape.extend_from_slice(dims);
                    (x.reshape(&shape)?, Cache::Shape(in_shape))
                }
                Layer::Rnn { w_ih, w_hh, b_ih, b_hh } => {
                    let (y, c) = rnn_layer_forward(&x, rnn_params(params, *w_ih, *w_hh, *b_ih, *b_hh))?;
                    (y, Cache::Rnn(c))
                }
                Layer::Lstm { w_ih, w_hh, b_ih, b_hh } => {
                    let (y, c) = lstm_layer_forward(&x, rnn_params(params, *w_ih, *w_hh, *b_ih, *b_hh))?;
                    (y, Cache::Lstm(c))
                }
                Layer::LastStep => {
                    let (batch, steps, hid) = x.dims3("last_step")?;
                    if steps == 0 {
                        return Err(NnError::shape("last_step", "sequence has no steps"));
                    }
                    let idx: Vec<usize> = (0..batch).map(|b| b * steps + steps - 1).collect();
                    let y = x.clone().reshape(&[batch * steps, hid])?.gather_rows(&idx);
                    (y, Cache::Shape(x.shape().to_vec()))
                }
            };
            if let Some(t) = tape.as_deref_mut() {
                t.caches.push(cache);
            }
            x = y;
        }
        Ok(x)
    }

    /// Reverse pass. Parameter gradients are added into `grads`; the
    /// gradient w.r.t. the network input is returned.
    pub fn backward(&self, params: &ParamSet, tape: &Tape, grad_out: &Tensor, grads: &mut Grads) -> Result<Tensor, NnError> {
        if tape.caches.len() != self.layers.len() || (tape.is_empty() && !self.layers.is_empty()) {
            return Err(NnError::NoForward);
        }
        let mut g = grad_out.clone();
        for (layer, cache) in self.layers.iter().zip(&tape.caches).rev() {
            g = match (layer, cache) {
                (Layer::Dense { w, b }, Cache::Input(x)) => {
                    let d = dense_backward(x, params.get(*w), &g)?;
                    grads.accumulate(*w, &d.weights)?;
                    grads.accumulate(*b, &d.bias)?;
                    d.input
                }
                (Layer::Conv2d { k, b, stride, pad }, Cache::Input(x)) => {
                    let (dx, dk, db) = conv2d_backward(x, params.get(*k), params.get(*b), *stride, *pad, &g)?;
                    grads.accumulate(*k, &dk)?;
                    grads.accumulate(*b, &db)?;
                    dx
                }
                (Layer::MaxPool2, Cache::Pool(idx)) => maxpool2_backward(&g, idx)?,
                (Layer::Relu, Cache::Output(y)) => {
                    let mut dx = g;
                    for (d, &v) in dx.data_mut().iter_mut().zip(y.data()) {
                        if v <= 0.0 {
                            *d = 0.0;
                        }
                    }
                    dx
                }
                (Layer::Tanh, Cache::Output(y)) => {
                    let mut dx = g;
                    for (d, &v) in dx.data_mut().iter_mut().zip(y.data()) {
                        *d *= 1.0 - v * v;
                    }
                    dx
                }
                (Layer::Reshape(_), Cache::Shape(s)) => g.reshape(s)?,
                (Layer::Rnn { w_ih, w_hh, b_ih, b_hh }, Cache::Rnn(c)) => {
                    let d = rnn_layer_backward(rnn_params(params, *w_ih, *w_hh, *b_ih, *b_hh), c, &g)?;
                    grads.accumulate(*w_ih, &d.w_ih)?;
                    grads.accumulate(*w_hh, &d.w_hh)?;
                    grads.accumulate(*b_ih, &d.b_ih)?;
                    grads.accumulate(*b_hh, &d.b_hh)?;
                    d.input
                }
                (Layer::Lstm { w_ih, w_hh, b_ih, b_hh }, Cache::Lstm(c)) => {
                    let d = lstm_layer_backward(rnn_params(params, *w_ih, *w_hh, *b_ih, *b_hh), c, &g)?;
                    grads.accumulate(*w_ih, &d.w_ih)?;
                    grads.accumulate(*w_hh, &d.w_hh)?;
                    grads.accumulate(*b_ih, &d.b_ih)?;
                    grads.accumulate(*b_hh, &d.b_hh)?;
                    d.input
                }
                (Layer::LastStep, Cache::Shape(s)) => {
                    let (batch, steps, hid) = (s[0], s[1], s[2]);
                    let mut dx = Tensor::zeros(s);
                    for b in 0..batch {
                        let dst = (b * steps + steps - 1) * hid;
                        dx.data_mut()[dst..dst + hid].copy_from_slice(&g.data()[b * hid..(b + 1) * hid]);
                    }
                    dx
                }
                _ => return Err(NnError::NoForward),
            };
        }
        Ok(g)
    }
}
