use super::{NnError, Tensor};

/// Flat input index of the maximum for every output element.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolIndices {
    pub input_shape: Vec<usize>,
    pub argmax: Vec<usize>,
}

/// 2×2 max pooling with stride 2. Ties go to the first element in raster order.
pub fn maxpool2_forward(input: &Tensor) -> Result<(Tensor, PoolIndices), NnError> {
    let (batch, c, h, w) = input.dims4("maxpool2")?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(NnError::Extent { op: "maxpool2", detail: format!("odd spatial extent {h}x{w}") });
    }
    let (oh, ow) = (h / 2, w / 2);
    let x = input.data();
    let mut out = Vec::with_capacity(batch * c * oh * ow);
    let mut argmax = Vec::with_capacity(out.capacity());
    for plane in 0..batch * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + (2 * oy) * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = base + (2 * oy + dy) * w + 2 * ox + dx;
                    if x[i] > x[best] {
                        best = i;
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    Ok((
        Tensor::new(vec![batch, c, oh, ow], out)?,
        PoolIndices { input_shape: input.shape().to_vec(), argmax },
    ))
}

/// Routes each upstream gradient element to its argmax position.
pub fn maxpool2_backward(grad_out: &Tensor, idx: &PoolIndices) -> Result<Tensor, NnError> {
    if grad_out.len() != idx.argmax.len() {
        return Err(NnError::shape(
            "maxpool2_backward",
            format!("{} upstream values for {} pooled outputs", grad_out.len(), idx.argmax.len()),
        ));
    }
    let mut dx = Tensor::zeros(&idx.input_shape);
    let d = dx.data_mut();
    for (&i, &g) in idx.argmax.iter().zip(grad_out.data()) {
        d[i] += g;
    }
    Ok(dx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_window_max() {
        let x = Tensor::new(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (y, idx) = maxpool2_forward(&x).unwrap();
        assert_eq!(y.data(), &[4.0]);
        assert_eq!(idx.argmax, vec![3]);
    }

    #[test]
    fn constant_input_halves_resolution() {
        let (y, _) = maxpool2_forward(&Tensor::filled(&[2, 3, 4, 6], -0.25)).unwrap();
        assert_eq!(y.shape(), &[2, 3, 2, 3]);
        assert!(y.data().iter().all(|&v| v == -0.25));
    }

    #[test]
    fn increasing_raster_picks_bottom_right() {
        let x = Tensor::new(vec![1, 1, 4, 4], (0..16).map(|i| i as f32).collect()).unwrap();
        let (y, _) = maxpool2_forward(&x).unwrap();
        assert_eq!(y.data(), &[5.0, 7.0, 13.0, 15.0]);
    }

    #[test]
    fn odd_extent_rejected() {
        assert!(maxpool2_forward(&Tensor::zeros(&[1, 1, 3, 4])).is_err());
    }

    #[test]
    fn backward_routes_to_argmax_only() {
        let x = Tensor::new(vec![1, 1, 2, 4], vec![0.0, 9.0, 1.0, 2.0, 3.0, 4.0, 8.0, 5.0]).unwrap();
        let (_, idx) = maxpool2_forward(&x).unwrap();
        let dx = maxpool2_backward(&Tensor::new(vec![1, 1, 1, 2], vec![1.5, -2.0]).unwrap(), &idx).unwrap();
        assert_eq!(dx.data(), &[0.0, 1.5, 0.0, 0.0, 0.0, 0.0, -2.0, 0.0]);
    }
}
