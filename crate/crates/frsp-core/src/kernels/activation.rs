
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn relu_forward(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    for v in out.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// Masks the upstream gradient by the sign of the saved forward input.
pub fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    if input.shape() != grad_out.shape() {
        return Err(Error::ShapeMismatch {
            op: "relu_backward",
            expected: input.shape().to_vec(),
            got: grad_out.shape().to_vec(),
        });
    }
    let mut gin = grad_out.clone();
    for (g, &x) in gin.data_mut().iter_mut().zip(input.data()) {
        if x <= 0.0 {
            *g = 0.0;
        }
    }
    Ok(gin)
}

/// Softmax cross-entropy over logits `(B, c)`. Returns the mean loss and the
/// gradient w.r.t. the logits (already divided by the batch size).
pub fn softmax_xent(logits: &Tensor, labels: &[usize]) -> Result<(f32, Tensor)> {
    if logits.rank() != 2 || logits.dim(0) != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "softmax_xent",
            expected: alloc::vec![labels.len()],
            got: logits.shape().to_vec(),
        });
    }
    let (b, c) = (logits.dim(0), logits.dim(1));
    for &l in labels {
        if l >= c {
            return Err(Error::LabelOutOfRange { label: l, classes: c });
        }
    }
    let mut grad = Tensor::zeros(&[b, c]);
    let lv = logits.data();
    let gv = grad.data_mut();
    let mut loss = 0.0f64;
    let inv_b = 1.0 / b as f32;
    for i in 0..b {
        let row = &lv[i * c..(i + 1) * c];
        let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        let mut denom = 0.0f32;
        for &x in row {
            denom += libm::expf(x - max);
        }
        let log_denom = libm::logf(denom);
        loss += f64::from(log_denom - (row[labels[i]] - max));
        for j in 0..c {
            let p = libm::expf(row[j] - max - log_denom);
            gv[i * c + j] = (p - if j == labels[i] { 1.0 } else { 0.0 }) * inv_b;
        }
    }
    let loss = (loss / b as f64) as f32;
    if !loss.is_finite() {
        return Err(Error::NonFinite { op: "softmax_xent" });
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn relu_definition() {
        let x = Tensor::from_vec(&[3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu_forward(&x).data(), [0.0, 0.0, 2.0]);
    }

    #[test]
    fn uniform_logits_loss_is_ln2() {
        let logits = Tensor::zeros(&[1, 2]);
        let (loss, _) = softmax_xent(&logits, &[0]).unwrap();
        assert!((loss - core::f32::consts::LN_2).abs() < 1e-6);
    }

    #[test]
    fn xent_rejects_bad_label() {
        let logits = Tensor::zeros(&[1, 2]);
        assert!(softmax_xent(&logits, &[2]).is_err());
    }
}
