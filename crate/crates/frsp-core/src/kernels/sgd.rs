
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// SGD hyperparameters. The update is the classic coupled variant:
/// `v <- mu*v + g + wd*w; w <- w - lr*v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdHyper {
    pub lr: f32,
    pub momentum: f32,
    pub weight_decay: f32,
}

impl SgdHyper {
    pub fn new(lr: f32, momentum: f32, weight_decay: f32) -> Self {
        SgdHyper { lr, momentum, weight_decay }
    }
}

/// One SGD step on a single parameter tensor. The momentum buffer must mirror
/// the parameter shape; a mismatch signals missed optimizer surgery after a
/// prune event.
pub fn sgd_step(
    param: &mut Tensor,
    grad: &Tensor,
    velocity: &mut Tensor,
    hyper: SgdHyper,
) -> Result<()> {
    if param.shape() != grad.shape() || param.shape() != velocity.shape() {
        return Err(Error::ShapeMismatch {
            op: "sgd_step",
            expected: param.shape().to_vec(),
            got: if param.shape() != grad.shape() {
                grad.shape().to_vec()
            } else {
                velocity.shape().to_vec()
            },
        });
    }
    let pv = param.data_mut();
    let gv = grad.data();
    let vv = velocity.data_mut();
    for i in 0..pv.len() {
        vv[i] = hyper.momentum * vv[i] + gv[i] + hyper.weight_decay * pv[i];
        pv[i] -= hyper.lr * vv[i];
    }
    param.check_finite("sgd_step")
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn plain_gradient_step() {
        let mut w = Tensor::zeros(&[1]);
        let g = Tensor::from_vec(&[1], vec![1.0]).unwrap();
        let mut v = Tensor::zeros(&[1]);
        sgd_step(&mut w, &g, &mut v, SgdHyper::new(1.0, 0.0, 0.0)).unwrap();
        assert_eq!(w.data(), [-1.0]);
    }

    #[test]
    fn zero_grad_zero_decay_is_fixed_point() {
        let mut w = Tensor::from_vec(&[2], vec![0.3, -0.7]).unwrap();
        let g = Tensor::zeros(&[2]);
        let mut v = Tensor::zeros(&[2]);
        sgd_step(&mut w, &g, &mut v, SgdHyper::new(0.1, 0.9, 0.0)).unwrap();
        assert_eq!(w.data(), [0.3, -0.7]);
    }

    #[test]
    fn two_steps_match_hand_unrolled_recurrence() {
        // v1 = g1 + wd*w0; w1 = w0 - lr*v1
        // v2 = mu*v1 + g2 + wd*w1; w2 = w1 - lr*v2
        let (lr, mu, wd) = (0.1f32, 0.9f32, 0.01f32);
        let (w0, g1, g2) = (2.0f32, 0.5f32, -0.25f32);
        let mut w = Tensor::from_vec(&[1], vec![w0]).unwrap();
        let mut v = Tensor::zeros(&[1]);
        let h = SgdHyper::new(lr, mu, wd);
        sgd_step(&mut w, &Tensor::from_vec(&[1], vec![g1]).unwrap(), &mut v, h).unwrap();
        sgd_step(&mut w, &Tensor::from_vec(&[1], vec![g2]).unwrap(), &mut v, h).unwrap();
        let v1 = g1 + wd * w0;
        let w1 = w0 - lr * v1;
        let v2 = mu * v1 + g2 + wd * w1;
        let w2 = w1 - lr * v2;
        assert_eq!(w.data()[0], w2);
    }

    #[test]
    fn buffer_mismatch_is_an_error() {
        let mut w = Tensor::zeros(&[3]);
        let g = Tensor::zeros(&[3]);
        let mut v = Tensor::zeros(&[4]);
        assert!(sgd_step(&mut w, &g, &mut v, SgdHyper::new(0.1, 0.9, 0.0)).is_err());
    }
}
