use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// 2x2 max pooling with stride 2. Returns the pooled tensor plus the flat
/// input index of each winner; the records drive both the backward pass and
/// winner-take-all relevance redistribution.
pub fn maxpool2_forward(input: &Tensor) -> Result<(Tensor, Vec<u32>)> {
    if input.rank() != 4 || input.dim(2) % 2 != 0 || input.dim(3) % 2 != 0 {
        return Err(Error::ShapeMismatch {
            op: "maxpool2_forward",
            expected: vec![0, 0, 2, 2],
            got: input.shape().to_vec(),
        });
    }
    let (b, c, h, w) = (input.dim(0), input.dim(1), input.dim(2), input.dim(3));
    let (ho, wo) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[b, c, ho, wo]);
    let mut argmax = vec![0u32; out.len()];
    let xv = input.data();
    let ov = out.data_mut();
    for plane in 0..b * c {
        let x_base = plane * h * w;
        let o_base = plane * ho * wo;
        for oy in 0..ho {
            for ox in 0..wo {
                let i0 = x_base + (2 * oy) * w + 2 * ox;
                let cand = [i0, i0 + 1, i0 + w, i0 + w + 1];
                let mut best = cand[0];
                for &i in &cand[1..] {
                    if xv[i] > xv[best] {
                        best = i;
                    }
                }
                ov[o_base + oy * wo + ox] = xv[best];
                argmax[o_base + oy * wo + ox] = best as u32;
            }
        }
    }
    Ok((out, argmax))
}

/// Routes each upstream gradient to its recorded argmax position.
pub fn maxpool2_backward(
    input_shape: &[usize],
    argmax: &[u32],
    grad_out: &Tensor,
) -> Result<Tensor> {
    if argmax.len() != grad_out.len() {
        return Err(Error::ShapeMismatch {
            op: "maxpool2_backward",
            expected: vec![argmax.len()],
            got: vec![grad_out.len()],
        });
    }
    let mut gin = Tensor::zeros(input_shape);
    let gv = gin.data_mut();
    for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
        gv[idx as usize] += g;
    }
    Ok(gin)
}

/// Global average pooling `(B, C, H, W)` -> `(B, C)`.
pub fn global_avgpool_forward(input: &Tensor) -> Result<Tensor> {
    if input.rank() != 4 {
        return Err(Error::ShapeMismatch {
            op: "global_avgpool_forward",
            expected: vec![4],
            got: input.shape().to_vec(),
        });
    }
    let (b, c, h, w) = (input.dim(0), input.dim(1), input.dim(2), input.dim(3));
    let area = (h * w) as f32;
    let mut out = Tensor::zeros(&[b, c]);
    let xv = input.data();
    let ov = out.data_mut();
    for plane in 0..b * c {
        ov[plane] = xv[plane * h * w..(plane + 1) * h * w].iter().sum::<f32>() / area;
    }
    Ok(out)
}

pub fn global_avgpool_backward(input_shape: &[usize], grad_out: &Tensor) -> Result<Tensor> {
    let (b, c, h, w) = (input_shape[0], input_shape[1], input_shape[2], input_shape[3]);
    if grad_out.shape() != [b, c] {
        return Err(Error::ShapeMismatch {
            op: "global_avgpool_backward",
            expected: vec![b, c],
            got: grad_out.shape().to_vec(),
        });
    }
    let area = (h * w) as f32;
    let mut gin = Tensor::zeros(input_shape);
    let gv = gin.data_mut();
    for plane in 0..b * c {
        let g = grad_out.data()[plane] / area;
        for v in &mut gv[plane * h * w..(plane + 1) * h * w] {
            *v = g;
        }
    }
    Ok(gin)
}
