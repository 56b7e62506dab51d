use alloc::vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Fully connected layer. `input` is `(B, F)`, `weight` `(Out, F)`, output `(B, Out)`.
pub fn linear_forward(input: &Tensor, weight: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    if input.rank() != 2 || weight.rank() != 2 || input.dim(1) != weight.dim(1) {
        return Err(Error::ShapeMismatch {
            op: "linear_forward",
            expected: weight.shape().to_vec(),
            got: input.shape().to_vec(),
        });
    }
    let (b, f) = (input.dim(0), input.dim(1));
    let out_dim = weight.dim(0);
    let mut out = Tensor::zeros(&[b, out_dim]);
    let xv = input.data();
    let wv = weight.data();
    let ov = out.data_mut();
    for i in 0..b {
        let xrow = &xv[i * f..(i + 1) * f];
        for o in 0..out_dim {
            let wrow = &wv[o * f..(o + 1) * f];
            let mut acc = bias.map_or(0.0, |bb| bb.data()[o]);
            for (x, w) in xrow.iter().zip(wrow) {
                acc += x * w;
            }
            ov[i * out_dim + o] = acc;
        }
    }
    out.check_finite("linear_forward")?;
    Ok(out)
}

pub struct LinearGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

pub fn linear_backward(
    input: &Tensor,
    weight: &Tensor,
    has_bias: bool,
    grad_out: &Tensor,
) -> Result<LinearGrads> {
    let (b, f) = (input.dim(0), input.dim(1));
    let out_dim = weight.dim(0);
    if grad_out.shape() != [b, out_dim] {
        return Err(Error::ShapeMismatch {
            op: "linear_backward",
            expected: vec![b, out_dim],
            got: grad_out.shape().to_vec(),
        });
    }
    let mut gin = Tensor::zeros(&[b, f]);
    let mut gw = Tensor::zeros(&[out_dim, f]);
    let mut gb = if has_bias { Some(Tensor::zeros(&[out_dim])) } else { None };
    let xv = input.data();
    let wv = weight.data();
    let gov = grad_out.data();
    {
        let ginv = gin.data_mut();
        let gwv = gw.data_mut();
        for i in 0..b {
            for o in 0..out_dim {
                let g = gov[i * out_dim + o];
                if let Some(gb) = gb.as_mut() {
                    gb.data_mut()[o] += g;
                }
                let wrow = &wv[o * f..(o + 1) * f];
                let xrow = &xv[i * f..(i + 1) * f];
                let girow = &mut ginv[i * f..(i + 1) * f];
                for (gi, w) in girow.iter_mut().zip(wrow) {
                    *gi += g * w;
                }
                let gwrow = &mut gwv[o * f..(o + 1) * f];
                for (gw, x) in gwrow.iter_mut().zip(xrow) {
                    *gw += g * x;
                }
            }
        }
    }
    Ok(LinearGrads { input: gin, weight: gw, bias: gb })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_matches_hand_computation() {
        let x = Tensor::from_vec(&[1, 2], vec![1.0, 2.0]).unwrap();
        let w = Tensor::from_vec(&[2, 2], vec![1.0, 0.0, -1.0, 3.0]).unwrap();
        let b = Tensor::from_vec(&[2], vec![0.5, 0.0]).unwrap();
        let y = linear_forward(&x, &w, Some(&b)).unwrap();
        assert_eq!(y.data(), [1.5, 5.0]);
    }

    #[test]
    fn backward_shapes() {
        let x = Tensor::zeros(&[3, 4]);
        let w = Tensor::zeros(&[2, 4]);
        let go = Tensor::zeros(&[3, 2]);
        let g = linear_backward(&x, &w, true, &go).unwrap();
        assert_eq!(g.input.shape(), [3, 4]);
        assert_eq!(g.weight.shape(), [2, 4]);
        assert_eq!(g.bias.unwrap().shape(), [2]);
    }
}
