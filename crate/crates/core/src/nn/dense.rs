use super::{gemm, NnError, Tensor, Trans};

/// Gradients of a fully-connected layer.
#[derive(Clone, Debug)]
pub struct DenseGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

fn check(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<(usize, usize, usize), NnError> {
    let (batch, fan_in) = input.dims2("dense")?;
    let (w_in, w_out) = weights.dims2("dense")?;
    if w_in != fan_in {
        return Err(NnError::shape(
            "dense",
            format!("input has {fan_in} features but weights are [{w_in}, {w_out}]"),
        ));
    }
    if bias.shape() != [w_out] {
        return Err(NnError::shape(
            "dense",
            format!("bias {:?} does not match {w_out} outputs", bias.shape()),
        ));
    }
    Ok((batch, fan_in, w_out))
}

/// `output[b, j] = Σ_i input[b, i] · weights[i, j] + bias[j]`.
pub fn dense_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor, NnError> {
    let (batch, fan_in, fan_out) = check(input, weights, bias)?;
    let mut out = Vec::with_capacity(batch * fan_out);
    for _ in 0..batch {
        out.extend_from_slice(bias.data());
    }
    gemm(batch, fan_in, fan_out, input.data(), Trans::No, weights.data(), Trans::No, 1.0, &mut out);
    Tensor::new(vec![batch, fan_out], out)
}

pub fn dense_backward(
    input: &Tensor,
    weights: &Tensor,
    grad_out: &Tensor,
) -> Result<DenseGrads, NnError> {
    let (batch, fan_in) = input.dims2("dense_backward")?;
    let (_, fan_out) = weights.dims2("dense_backward")?;
    if grad_out.shape() != [batch, fan_out] {
        return Err(NnError::shape(
            "dense_backward",
            format!("upstream gradient {:?}, expected [{batch}, {fan_out}]", grad_out.shape()),
        ));
    }
    let mut dx = vec![0.0; batch * fan_in];
    gemm(batch, fan_out, fan_in, grad_out.data(), Trans::No, weights.data(), Trans::Yes, 0.0, &mut dx);
    let mut dw = vec![0.0; fan_in * fan_out];
    gemm(fan_in, batch, fan_out, input.data(), Trans::Yes, grad_out.data(), Trans::No, 0.0, &mut dw);
    let mut db = vec![0.0; fan_out];
    for row in grad_out.data().chunks_exact(fan_out) {
        for (d, g) in db.iter_mut().zip(row) {
            *d += g;
        }
    }
    Ok(DenseGrads {
        input: Tensor::new(vec![batch, fan_in], dx)?,
        weights: Tensor::new(vec![fan_in, fan_out], dw)?,
        bias: Tensor::from_vec(db),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f32]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn identity_weights() {
        let y = dense_forward(&t(&[1, 2], &[1.0, 2.0]), &t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]), &t(&[2], &[0.0, 0.0]))
            .unwrap();
        assert_eq!(y.data(), &[1.0, 2.0]);
    }

    #[test]
    fn all_ones() {
        let y = dense_forward(&t(&[1, 2], &[1.0, 1.0]), &t(&[2, 2], &[1.0; 4]), &t(&[2], &[1.0, 1.0])).unwrap();
        assert_eq!(y.data(), &[3.0, 3.0]);
    }

    #[test]
    fn zero_input_gives_bias() {
        let b = t(&[3], &[0.5, -1.0, 2.0]);
        let y = dense_forward(&Tensor::zeros(&[2, 4]), &Tensor::filled(&[4, 3], 0.7), &b).unwrap();
        assert_eq!(y.data(), &[0.5, -1.0, 2.0, 0.5, -1.0, 2.0]);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let err = dense_forward(&Tensor::zeros(&[1, 3]), &Tensor::zeros(&[2, 2]), &Tensor::zeros(&[2]))
            .unwrap_err();
        assert!(err.to_string().contains("3 features"));
        assert!(dense_forward(&Tensor::zeros(&[1, 2]), &Tensor::zeros(&[2, 2]), &Tensor::zeros(&[3])).is_err());
    }

    #[test]
    fn sum_loss_gradients() {
        // L = sum(x·W + b), x = [[1, 2]]
        let x = t(&[1, 2], &[1.0, 2.0]);
        let w = t(&[2, 2], &[0.3, -0.2, 0.1, 0.4]);
        let g = dense_backward(&x, &w, &Tensor::filled(&[1, 2], 1.0)).unwrap();
        assert_eq!(g.bias.data(), &[1.0, 1.0]);
        assert_eq!(g.weights.data(), &[1.0, 1.0, 2.0, 2.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let x = t(&[2, 2], &[1.0, -2.0, 0.5, 3.0]);
        let w = t(&[2, 3], &[0.1; 6]);
        let g = dense_backward(&x, &w, &Tensor::zeros(&[2, 3])).unwrap();
        assert!(g.weights.data().iter().chain(g.bias.data()).chain(g.input.data()).all(|&v| v == 0.0));
    }
}
