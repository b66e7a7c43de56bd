use super::{NnError, Tensor};

/// Mean cross-entropy over a batch and its gradient w.r.t. the logits.
#[derive(Clone, Debug)]
pub struct CrossEntropy {
    pub loss: f32,
    pub grad: Tensor,
    /// Number of rows whose argmax equals the label.
    pub correct: usize,
}

/// `mean_b −log softmax(logits_b)[label_b]`; gradient `(softmax − onehot) / batch`.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[u8]) -> Result<CrossEntropy, NnError> {
    let (batch, classes) = logits.dims2("softmax_cross_entropy")?;
    if labels.len() != batch {
        return Err(NnError::shape(
            "softmax_cross_entropy",
            format!("{batch} rows of logits but {} labels", labels.len()),
        ));
    }
    if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l as usize >= classes) {
        return Err(NnError::LabelRange { row, label: label as usize, classes });
    }
    let mut grad = vec![0.0; batch * classes];
    let mut total = 0.0f64;
    let mut correct = 0;
    let scale = 1.0 / batch.max(1) as f32;
    for (b, row) in logits.data().chunks_exact(classes).enumerate() {
        let label = labels[b] as usize;
        let (argmax, max) = row
            .iter()
            .enumerate()
            .fold((0, f32::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        if argmax == label {
            correct += 1;
        }
        let sum: f64 = row.iter().map(|&v| ((v - max) as f64).exp()).sum();
        let log_z = max as f64 + sum.ln();
        total += log_z - row[label] as f64;
        let g = &mut grad[b * classes..(b + 1) * classes];
        for (gi, &v) in g.iter_mut().zip(row) {
            *gi = ((v as f64 - log_z).exp() as f32) * scale;
        }
        g[label] -= scale;
    }
    Ok(CrossEntropy {
        loss: (total / batch.max(1) as f64) as f32,
        grad: Tensor::new(vec![batch, classes], grad)?,
        correct,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln_classes() {
        let ce = softmax_cross_entropy(&Tensor::zeros(&[1, 10]), &[3]).unwrap();
        assert!((ce.loss - 10f32.ln()).abs() < 1e-6);
        assert!((ce.loss - std::f32::consts::LN_10).abs() < 1e-6);
    }

    #[test]
    fn confident_correct_logit_gives_near_zero() {
        let mut l = Tensor::zeros(&[1, 10]);
        l.data_mut()[7] = 80.0;
        let ce = softmax_cross_entropy(&l, &[7]).unwrap();
        assert!(ce.loss < 1e-6);
        assert_eq!(ce.correct, 1);
    }

    #[test]
    fn hand_computed_case() {
        let mut l = Tensor::zeros(&[1, 10]);
        l.data_mut()[0] = 1.0;
        let ce = softmax_cross_entropy(&l, &[0]).unwrap();
        let want = (std::f64::consts::E + 9.0).ln() - 1.0;
        assert!((ce.loss as f64 - want).abs() < 1e-6);
    }

    #[test]
    fn out_of_range_label_rejected() {
        let err = softmax_cross_entropy(&Tensor::zeros(&[2, 10]), &[1, 10]).unwrap_err();
        assert_eq!(err, NnError::LabelRange { row: 1, label: 10, classes: 10 });
    }

    #[test]
    fn gradient_rows_sum_to_zero() {
        let l = Tensor::new(vec![2, 3], vec![0.2, -1.0, 3.0, 5.0, 5.0, -2.0]).unwrap();
        let ce = softmax_cross_entropy(&l, &[2, 0]).unwrap();
        assert!(ce.loss >= 0.0);
        for row in ce.grad.data().chunks(3) {
            assert!(row.iter().sum::<f32>().abs() < 1e-6);
        }
    }
}
