//! Elman (tanh) and LSTM recurrent layers over `[batch, steps, features]`
//! sequences.
//!
//! Both cells carry two bias vectors, `b_ih` and `b_hh`. LSTM gate blocks are
//! concatenated along the output axis in the order i, f, g, o, so `w_ih` is
//! `[in, 4·hid]`, `w_hh` is `[hid, 4·hid]` and each bias is `[4·hid]`.

use super::{gemm, NnError, Tensor, Trans};

#[derive(Clone, Copy, Debug)]
pub struct RnnParams<'a> {
    pub w_ih: &'a Tensor,
    pub w_hh: &'a Tensor,
    pub b_ih: &'a Tensor,
    pub b_hh: &'a Tensor,
}

/// Same layout as [`RnnParams`], with every output axis widened to `4·hid`.
pub type LstmParams<'a> = RnnParams<'a>;

/// Gradients of a recurrent layer.
#[derive(Clone, Debug)]
pub struct RecurrentGrads {
    pub input: Tensor,
    pub w_ih: Tensor,
    pub w_hh: Tensor,
    pub b_ih: Tensor,
    pub b_hh: Tensor,
}

/// Returns `(in, hid)` after checking that all blocks agree. `gates` is 1 for
/// the Elman cell and 4 for LSTM.
fn check_params(op: &'static str, p: &RnnParams<'_>, gates: usize) -> Result<(usize, usize), NnError> {
    let (fan_in, width) = p.w_ih.dims2(op)?;
    if width % gates != 0 {
        return Err(NnError::shape(op, format!("w_ih width {width} is not a multiple of {gates}")));
    }
    let hid = width / gates;
    if p.w_hh.shape() != [hid, width] {
        return Err(NnError::shape(op, format!("w_hh {:?}, expected [{hid}, {width}]", p.w_hh.shape())));
    }
    for (name, b) in [("b_ih", p.b_ih), ("b_hh", p.b_hh)] {
        if b.shape() != [width] {
            return Err(NnError::shape(op, format!("{name} {:?}, expected [{width}]", b.shape())));
        }
    }
    Ok((fan_in, hid))
}

/// `[batch, width]` buffer with both biases broadcast into every row.
fn bias_rows(p: &RnnParams<'_>, batch: usize) -> Vec<f32> {
    let sum: Vec<f32> = p.b_ih.data().iter().zip(p.b_hh.data()).map(|(a, b)| a + b).collect();
    let mut out = Vec::with_capacity(batch * sum.len());
    for _ in 0..batch {
        out.extend_from_slice(&sum);
    }
    out
}

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// Projects every time step through `w_ih` at once: rows are `(b, t)`.
fn input_projection(x: &Tensor, w_ih: &Tensor) -> Vec<f32> {
    let (batch, steps, fan_in) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let width = w_ih.shape()[1];
    let mut pre = vec![0.0; batch * steps * width];
    gemm(batch * steps, fan_in, width, x.data(), Trans::No, w_ih.data(), Trans::No, 0.0, &mut pre);
    pre
}

fn check_sequence(op: &'static str, x: &Tensor, fan_in: usize) -> Result<(usize, usize), NnError> {
    let (batch, steps, f) = x.dims3(op)?;
    if f != fan_in {
        return Err(NnError::shape(op, format!("sequence has {f} features, w_ih expects {fan_in}")));
    }
    Ok((batch, steps))
}

fn check_state(op: &'static str, t: &Tensor, batch: usize, hid: usize, what: &str) -> Result<(), NnError> {
    if t.shape() != [batch, hid] {
        return Err(NnError::shape(op, format!("{what} {:?}, expected [{batch}, {hid}]", t.shape())));
    }
    Ok(())
}

/// `h_t = tanh(x_t·W_ih + h_prev·W_hh + b_ih + b_hh)`.
pub fn rnn_cell_forward(x_t: &Tensor, h_prev: &Tensor, p: RnnParams<'_>) -> Result<Tensor, NnError> {
    let (fan_in, hid) = check_params("rnn_cell", &p, 1)?;
    let (batch, f) = x_t.dims2("rnn_cell")?;
    if f != fan_in {
        return Err(NnError::shape("rnn_cell", format!("x_t has {f} features, w_ih expects {fan_in}")));
    }
    check_state("rnn_cell", h_prev, batch, hid, "h_prev")?;
    let mut a = bias_rows(&p, batch);
    gemm(batch, fan_in, hid, x_t.data(), Trans::No, p.w_ih.data(), Trans::No, 1.0, &mut a);
    gemm(batch, hid, hid, h_prev.data(), Trans::No, p.w_hh.data(), Trans::No, 1.0, &mut a);
    a.iter_mut().for_each(|v| *v = v.tanh());
    Tensor::new(vec![batch, hid], a)
}

/// Standard LSTM step; returns `(h_t, c_t)`.
pub fn lstm_cell_forward(
    x_t: &Tensor,
    h_prev: &Tensor,
    c_prev: &Tensor,
    p: LstmParams<'_>,
) -> Result<(Tensor, Tensor), NnError> {
    let (fan_in, hid) = check_params("lstm_cell", &p, 4)?;
    let (batch, f) = x_t.dims2("lstm_cell")?;
    if f != fan_in {
        return Err(NnError::shape("lstm_cell", format!("x_t has {f} features, w_ih expects {fan_in}")));
    }
    check_state("lstm_cell", h_prev, batch, hid, "h_prev")?;
    check_state("lstm_cell", c_prev, batch, hid, "c_prev")?;
    let mut z = bias_rows(&p, batch);
    gemm(batch, fan_in, 4 * hid, x_t.data(), Trans::No, p.w_ih.data(), Trans::No, 1.0, &mut z);
    let mut h = vec![0.0; batch * hid];
    let mut c = vec![0.0; batch * hid];
    let mut tanh_c = vec![0.0; batch * hid];
    lstm_gates_step(&mut z, h_prev.data(), c_prev.data(), p.w_hh, batch, hid, &mut c, &mut tanh_c, &mut h);
    Ok((Tensor::new(vec![batch, hid], h)?, Tensor::new(vec![batch, hid], c)?))
}

/// Adds the recurrent term to the pre-activations `z`, applies the gate
/// non-linearities in place and writes the new cell and hidden state.
#[allow(clippy::too_many_arguments)]
fn lstm_gates_step(
    z: &mut [f32],
    h_prev: &[f32],
    c_prev: &[f32],
    w_hh: &Tensor,
    batch: usize,
    hid: usize,
    c: &mut [f32],
    tanh_c: &mut [f32],
    h: &mut [f32],
) {
    gemm(batch, hid, 4 * hid, h_prev, Trans::No, w_hh.data(), Trans::No, 1.0, z);
    for b in 0..batch {
        let zb = &mut z[b * 4 * hid..(b + 1) * 4 * hid];
        for j in 0..hid {
            let i = sigmoid(zb[j]);
            let f = sigmoid(zb[hid + j]);
            let g = zb[2 * hid + j].tanh();
            let o = sigmoid(zb[3 * hid + j]);
            zb[j] = i;
            zb[hid + j] = f;
            zb[2 * hid + j] = g;
            zb[3 * hid + j] = o;
            let k = b * hid + j;
            c[k] = f * c_prev[k] + i * g;
            tanh_c[k] = c[k].tanh();
            h[k] = o * tanh_c[k];
        }
    }
}

/// Intermediates of an Elman layer forward pass.
#[derive(Clone, Debug)]
pub struct RnnCache {
    input: Tensor,
    /// Hidden states `h_1..h_T`, laid out `[T][batch][hid]`.
    hs: Vec<f32>,
}

/// Runs the Elman cell over all steps from `h_0 = 0`; output is `[batch, steps, hid]`.
pub fn rnn_layer_forward(x: &Tensor, p: RnnParams<'_>) -> Result<(Tensor, RnnCache), NnError> {
    let (fan_in, hid) = check_params("rnn_layer", &p, 1)?;
    let (batch, steps) = check_sequence("rnn_layer", x, fan_in)?;
    let pre = input_projection(x, p.w_ih);
    let bias = bias_rows(&p, batch);
    let mut hs = vec![0.0; steps * batch * hid];
    let mut out = vec![0.0; batch * steps * hid];
    let zero = vec![0.0; batch * hid];
    for t in 0..steps {
        let (done, rest) = hs.split_at_mut(t * batch * hid);
        let h_prev: &[f32] = if t == 0 { &zero } else { &done[(t - 1) * batch * hid..] };
        let h = &mut rest[..batch * hid];
        h.copy_from_slice(&bias);
        gemm(batch, hid, hid, h_prev, Trans::No, p.w_hh.data(), Trans::No, 1.0, h);
        for b in 0..batch {
            let src = &pre[(b * steps + t) * hid..(b * steps + t + 1) * hid];
            let dst = &mut out[(b * steps + t) * hid..(b * steps + t + 1) * hid];
            for ((hv, pv), ov) in h[b * hid..(b + 1) * hid].iter_mut().zip(src).zip(dst) {
                *hv = (*hv + pv).tanh();
                *ov = *hv;
            }
        }
    }
    Ok((Tensor::new(vec![batch, steps, hid], out)?, RnnCache { input: x.clone(), hs }))
}

/// Back-propagation through time for [`rnn_layer_forward`].
pub fn rnn_layer_backward(p: RnnParams<'_>, cache: &RnnCache, grad_out: &Tensor) -> Result<RecurrentGrads, NnError> {
    let (fan_in, hid) = check_params("rnn_layer_backward", &p, 1)?;
    let (batch, steps) = check_sequence("rnn_layer_backward", &cache.input, fan_in)?;
    if grad_out.shape() != [batch, steps, hid] {
        return Err(NnError::shape(
            "rnn_layer_backward",
            format!("upstream gradient {:?}, expected [{batch}, {steps}, {hid}]", grad_out.shape()),
        ));
    }
    let go = grad_out.data();
    let mut da_all = vec![0.0; batch * steps * hid];
    let mut dh_next = vec![0.0; batch * hid];
    let mut da = vec![0.0; batch * hid];
    let mut dw_hh = vec![0.0; hid * hid];
    for t in (0..steps).rev() {
        let h = &cache.hs[t * batch * hid..(t + 1) * batch * hid];
        for b in 0..batch {
            for j in 0..hid {
                let k = b * hid + j;
                let dh = go[(b * steps + t) * hid + j] + dh_next[k];
                da[k] = dh * (1.0 - h[k] * h[k]);
                da_all[(b * steps + t) * hid + j] = da[k];
            }
        }
        if t > 0 {
            let h_prev = &cache.hs[(t - 1) * batch * hid..t * batch * hid];
            gemm(hid, batch, hid, h_prev, Trans::Yes, &da, Trans::No, 1.0, &mut dw_hh);
        }
        gemm(batch, hid, hid, &da, Trans::No, p.w_hh.data(), Trans::Yes, 0.0, &mut dh_next);
    }
    finish_grads(&cache.input, p, &da_all, dw_hh, hid)
}

/// Input-side gradients shared by both cells, from the per-step
/// pre-activation gradients `dz_all` (rows `(b, t)`).
fn finish_grads(
    input: &Tensor,
    p: RnnParams<'_>,
    dz_all: &[f32],
    dw_hh: Vec<f32>,
    width: usize,
) -> Result<RecurrentGrads, NnError> {
    let (batch, steps, fan_in) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let rows = batch * steps;
    let mut dw_ih = vec![0.0; fan_in * width];
    gemm(fan_in, rows, width, input.data(), Trans::Yes, dz_all, Trans::No, 0.0, &mut dw_ih);
    let mut dx = vec![0.0; rows * fan_in];
    gemm(rows, width, fan_in, dz_all, Trans::No, p.w_ih.data(), Trans::Yes, 0.0, &mut dx);
    let mut db = vec![0.0; width];
    for row in dz_all.chunks_exact(width) {
        for (d, g) in db.iter_mut().zip(row) {
            *d += g;
        }
    }
    Ok(RecurrentGrads {
        input: Tensor::new(input.shape().to_vec(), dx)?,
        w_ih: Tensor::new(p.w_ih.shape().to_vec(), dw_ih)?,
        w_hh: Tensor::new(p.w_hh.shape().to_vec(), dw_hh)?,
        b_ih: Tensor::from_vec(db.clone()),
        b_hh: Tensor::from_vec(db),
    })
}

/// Intermediates of an LSTM layer forward pass; every buffer is `[T][batch][..]`.
#[derive(Clone, Debug)]
pub struct LstmCache {
    input: Tensor,
    gates: Vec<f32>,
    cs: Vec<f32>,
    tanh_cs: Vec<f32>,
    hs: Vec<f32>,
}

/// Runs the LSTM over all steps from zero state; output is `[batch, steps, hid]`.
pub fn lstm_layer_forward(x: &Tensor, p: LstmParams<'_>) -> Result<(Tensor, LstmCache), NnError> {
    let (fan_in, hid) = check_params("lstm_layer", &p, 4)?;
    let (batch, steps) = check_sequence("lstm_layer", x, fan_in)?;
    let width = 4 * hid;
    let pre = input_projection(x, p.w_ih);
    let bias = bias_rows(&p, batch);
    let state = batch * hid;
    let mut gates = vec![0.0; steps * batch * width];
    let mut cs = vec![0.0; steps * state];
    let mut tanh_cs = vec![0.0; steps * state];
    let mut hs = vec![0.0; steps * state];
    let mut out = vec![0.0; batch * steps * hid];
    let zero = vec![0.0; state];
    for t in 0..steps {
        let z = &mut gates[t * batch * width..(t + 1) * batch * width];
        z.copy_from_slice(&bias);
        for b in 0..batch {
            let src = &pre[(b * steps + t) * width..(b * steps + t + 1) * width];
            for (zv, pv) in z[b * width..(b + 1) * width].iter_mut().zip(src) {
                *zv += pv;
            }
        }
        let (hs_done, hs_rest) = hs.split_at_mut(t * state);
        let (cs_done, cs_rest) = cs.split_at_mut(t * state);
        let h_prev: &[f32] = if t == 0 { &zero } else { &hs_done[(t - 1) * state..] };
        let c_prev: &[f32] = if t == 0 { &zero } else { &cs_done[(t - 1) * state..] };
        let h = &mut hs_rest[..state];
        let c = &mut cs_rest[..state];
        let tc = &mut tanh_cs[t * state..(t + 1) * state];
        lstm_gates_step(z, h_prev, c_prev, p.w_hh, batch, hid, c, tc, h);
        for b in 0..batch {
            out[(b * steps + t) * hid..(b * steps + t + 1) * hid].copy_from_slice(&h[b * hid..(b + 1) * hid]);
        }
    }
    Ok((
        Tensor::new(vec![batch, steps, hid], out)?,
        LstmCache { input: x.clone(), gates, cs, tanh_cs, hs },
    ))
}

/// Back-propagation through time for [`lstm_layer_forward`].
pub fn lstm_layer_backward(p: LstmParams<'_>, cache: &LstmCache, grad_out: &Tensor) -> Result<RecurrentGrads, NnError> {
    let (fan_in, hid) = check_params("lstm_layer_backward", &p, 4)?;
    let (batch, steps) = check_sequence("lstm_layer_backward", &cache.input, fan_in)?;
    if grad_out.shape() != [batch, steps, hid] {
        return Err(NnError::shape(
            "lstm_layer_backward",
            format!("upstream gradient {:?}, expected [{batch}, {steps}, {hid}]", grad_out.shape()),
        ));
    }
    let width = 4 * hid;
    let state = batch * hid;
    let go = grad_out.data();
    let mut dz_all = vec![0.0; batch * steps * width];
    let mut dz = vec![0.0; batch * width];
    let mut dh_next = vec![0.0; state];
    let mut dc_next = vec![0.0; state];
    let mut dw_hh = vec![0.0; hid * width];
    for t in (0..steps).rev() {
        let gates = &cache.gates[t * batch * width..(t + 1) * batch * width];
        let tc = &cache.tanh_cs[t * state..(t + 1) * state];
        for b in 0..batch {
            let gb = &gates[b * width..(b + 1) * width];
            let dzb = &mut dz[b * width..(b + 1) * width];
            for j in 0..hid {
                let k = b * hid + j;
                let (i, f, g, o) = (gb[j], gb[hid + j], gb[2 * hid + j], gb[3 * hid + j]);
                let c_prev = if t == 0 { 0.0 } else { cache.cs[(t - 1) * state + k] };
                let dh = go[(b * steps + t) * hid + j] + dh_next[k];
                let d_o = dh * tc[k];
                let dc = dc_next[k] + dh * o * (1.0 - tc[k] * tc[k]);
                dzb[j] = dc * g * i * (1.0 - i);
                dzb[hid + j] = dc * c_prev * f * (1.0 - f);
                dzb[2 * hid + j] = dc * i * (1.0 - g * g);
                dzb[3 * hid + j] = d_o * o * (1.0 - o);
                dc_next[k] = dc * f;
            }
            dz_all[(b * steps + t) * width..(b * steps + t + 1) * width].copy_from_slice(dzb);
        }
        if t > 0 {
            let h_prev = &cache.hs[(t - 1) * state..t * state];
            gemm(hid, batch, width, h_prev, Trans::Yes, &dz, Trans::No, 1.0, &mut dw_hh);
        }
        gemm(batch, width, hid, &dz, Trans::No, p.w_hh.data(), Trans::Yes, 0.0, &mut dh_next);
    }
    finish_grads(&cache.input, p, &dz_all, dw_hh, width)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eye(n: usize) -> Tensor {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data_mut()[i * n + i] = 1.0;
        }
        t
    }

    #[test]
    fn rnn_zero_params_give_zero_state() {
        let z2 = Tensor::zeros(&[3, 2]);
        let z22 = Tensor::zeros(&[2, 2]);
        let zb = Tensor::zeros(&[2]);
        let p = RnnParams { w_ih: &z2, w_hh: &z22, b_ih: &zb, b_hh: &zb };
        let h = rnn_cell_forward(&Tensor::filled(&[1, 3], 2.0), &Tensor::filled(&[1, 2], 0.7), p).unwrap();
        assert_eq!(h.data(), &[0.0, 0.0]);
    }

    #[test]
    fn rnn_identity_recurrence_is_tanh() {
        let w_ih = Tensor::filled(&[2, 3], 5.0);
        let w_hh = eye(3);
        let zb = Tensor::zeros(&[3]);
        let p = RnnParams { w_ih: &w_ih, w_hh: &w_hh, b_ih: &zb, b_hh: &zb };
        let v = [0.3f32, -1.2, 2.0];
        let h = rnn_cell_forward(&Tensor::zeros(&[1, 2]), &Tensor::new(vec![1, 3], v.to_vec()).unwrap(), p).unwrap();
        for (a, b) in h.data().iter().zip(v) {
            assert!((a - b.tanh()).abs() < 1e-7);
        }
    }

    #[test]
    fn rnn_saturates() {
        let w_ih = Tensor::filled(&[1, 2], 100.0);
        let w_hh = Tensor::zeros(&[2, 2]);
        let zb = Tensor::zeros(&[2]);
        let p = RnnParams { w_ih: &w_ih, w_hh: &w_hh, b_ih: &zb, b_hh: &zb };
        let h = rnn_cell_forward(&Tensor::filled(&[1, 1], 1.0), &Tensor::zeros(&[1, 2]), p).unwrap();
        assert!(h.data().iter().all(|&v| v > 0.999_99));
    }

    #[test]
    fn rnn_shape_mismatch_rejected() {
        let w_ih = Tensor::zeros(&[2, 3]);
        let w_hh = Tensor::zeros(&[3, 3]);
        let zb = Tensor::zeros(&[3]);
        let p = RnnParams { w_ih: &w_ih, w_hh: &w_hh, b_ih: &zb, b_hh: &zb };
        assert!(rnn_cell_forward(&Tensor::zeros(&[1, 4]), &Tensor::zeros(&[1, 3]), p).is_err());
        assert!(rnn_cell_forward(&Tensor::zeros(&[1, 2]), &Tensor::zeros(&[2, 3]), p).is_err());
        let bad_b = Tensor::zeros(&[4]);
        let q = RnnParams { b_hh: &bad_b, ..p };
        assert!(rnn_cell_forward(&Tensor::zeros(&[1, 2]), &Tensor::zeros(&[1, 3]), q).is_err());
    }

    #[test]
    fn lstm_zero_params_halve_cell() {
        let hid = 3;
        let w_ih = Tensor::zeros(&[2, 4 * hid]);
        let w_hh = Tensor::zeros(&[hid, 4 * hid]);
        let zb = Tensor::zeros(&[4 * hid]);
        let p = LstmParams { w_ih: &w_ih, w_hh: &w_hh, b_ih: &zb, b_hh: &zb };
        let c_prev = Tensor::new(vec![1, hid], vec![1.0, -2.0, 4.0]).unwrap();
        let (h, c) = lstm_cell_forward(&Tensor::filled(&[1, 2], 1.0), &Tensor::zeros(&[1, hid]), &c_prev, p).unwrap();
        for j in 0..hid {
            let want_c = 0.5 * c_prev.data()[j];
            assert!((c.data()[j] - want_c).abs() < 1e-7);
            assert!((h.data()[j] - 0.5 * want_c.tanh()).abs() < 1e-7);
        }
    }

    fn gate_biases(hid: usize, i: f32, f: f32) -> Tensor {
        let mut b = Tensor::zeros(&[4 * hid]);
        b.data_mut()[..hid].fill(i);
        b.data_mut()[hid..2 * hid].fill(f);
        b
    }

    #[test]
    fn lstm_pure_memory() {
        let hid = 2;
        let w_ih = Tensor::filled(&[1, 4 * hid], 0.3);
        let w_hh = Tensor::filled(&[hid, 4 * hid], -0.2);
        let b = gate_biases(hid, -1e4, 1e4);
        let zb = Tensor::zeros(&[4 * hid]);
        let p = LstmParams { w_ih: &w_ih, w_hh: &w_hh, b_ih: &b, b_hh: &zb };
        let c_prev = Tensor::new(vec![1, hid], vec![0.25, -3.0]).unwrap();
        let (_, c) = lstm_cell_forward(&Tensor::filled(&[1, 1], 1.0), &Tensor::filled(&[1, hid], 0.5), &c_prev, p).unwrap();
        assert_eq!(c.data(), c_prev.data());
    }

    #[test]
    fn lstm_closed_input_gate_with_empty_cell() {
        let hid = 2;
        let w_ih = Tensor::filled(&[1, 4 * hid], 0.3);
        let w_hh = Tensor::filled(&[hid, 4 * hid], 0.1);
        let b = gate_biases(hid, -1e4, 0.0);
        let zb = Tensor::zeros(&[4 * hid]);
        let p = LstmParams { w_ih: &w_ih, w_hh: &w_hh, b_ih: &b, b_hh: &zb };
        let (_, c) = lstm_cell_forward(&Tensor::filled(&[1, 1], 1.0), &Tensor::zeros(&[1, hid]), &Tensor::zeros(&[1, hid]), p).unwrap();
        assert!(c.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn layer_matches_repeated_cells() {
        let hid = 3;
        let mut seed = 1u32;
        let mut next = || {
            seed = seed.wrapping_mul(1_664_525).wrapping_add(1_013_904_223);
            (seed >> 8) as f32 / (1u32 << 24) as f32 - 0.5
        };
        let mut rand_t = |shape: &[usize]| {
            let n = shape.iter().product();
            Tensor::new(shape.to_vec(), (0..n).map(|_| next()).collect()).unwrap()
        };
        let x = rand_t(&[2, 4, 2]);
        let (w_ih, w_hh, b_ih, b_hh) = (rand_t(&[2, 4 * hid]), rand_t(&[hid, 4 * hid]), rand_t(&[4 * hid]), rand_t(&[4 * hid]));
        let p = LstmParams { w_ih: &w_ih, w_hh: &w_hh, b_ih: &b_ih, b_hh: &b_hh };
        let (seq, _) = lstm_layer_forward(&x, p).unwrap();
        let mut h = Tensor::zeros(&[2, hid]);
        let mut c = Tensor::zeros(&[2, hid]);
        for t in 0..4 {
            let xt: Vec<f32> = (0..2).flat_map(|b| x.data()[(b * 4 + t) * 2..(b * 4 + t + 1) * 2].to_vec()).collect();
            let (h2, c2) = lstm_cell_forward(&Tensor::new(vec![2, 2], xt).unwrap(), &h, &c, p).unwrap();
            h = h2;
            c = c2;
            for b in 0..2 {
                for j in 0..hid {
                    let got = seq.data()[(b * 4 + t) * hid + j];
                    assert!((got - h.data()[b * hid + j]).abs() < 1e-6);
                }
            }
        }
    }
}
