use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-channel batch statistics layer parameters. `gamma`/`beta` are trainable;
/// the running statistics are updated in training forward and used in eval.
#[derive(Debug, Clone, PartialEq)]
pub struct BnParams {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub eps: f32,
    pub momentum: f32,
}

impl BnParams {
    pub fn new(channels: usize) -> Self {
        BnParams {
            gamma: Tensor::full(&[channels], 1.0),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], 1.0),
            eps: 1e-5,
            momentum: 0.1,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.dim(0)
    }

    /// Effective per-channel scale `gamma / sqrt(running_var + eps)` used both
    /// in eval forward and when folding into an adjacent convolution.
    pub fn eval_scale(&self, c: usize) -> f32 {
        self.gamma.data()[c] / libm::sqrtf(self.running_var.data()[c] + self.eps)
    }
}

fn check_bn(op: &'static str, input: &Tensor, params: &BnParams) -> Result<()> {
    if input.rank() != 4 || input.dim(1) != params.channels() {
        return Err(Error::ShapeMismatch {
            op,
            expected: vec![params.channels()],
            got: input.shape().to_vec(),
        });
    }
    Ok(())
}

/// Training-mode forward: normalize by batch statistics, update running stats.
/// Returns the output plus the saved per-channel `(mean, inv_std)` needed by
/// the backward pass.
pub fn bn_forward_train(
    input: &Tensor,
    params: &mut BnParams,
) -> Result<(Tensor, Vec<f32>, Vec<f32>)> {
    check_bn("bn_forward_train", input, params)?;
    let (b, c, h, w) = (input.dim(0), input.dim(1), input.dim(2), input.dim(3));
    let n = (b * h * w) as f32;
    let plane = h * w;
    let xv = input.data();

    let mut mean = vec![0.0f32; c];
    let mut var = vec![0.0f32; c];
    for ch in 0..c {
        let mut sum = 0.0f32;
        let mut sq = 0.0f32;
        for bi in 0..b {
            let base = (bi * c + ch) * plane;
            for &x in &xv[base..base + plane] {
                sum += x;
                sq += x * x;
            }
        }
        mean[ch] = sum / n;
        var[ch] = (sq / n - mean[ch] * mean[ch]).max(0.0);
    }

    let mut inv_std = vec![0.0f32; c];
    for ch in 0..c {
        inv_std[ch] = 1.0 / libm::sqrtf(var[ch] + params.eps);
        let m = params.momentum;
        params.running_mean.data_mut()[ch] =
            (1.0 - m) * params.running_mean.data()[ch] + m * mean[ch];
        params.running_var.data_mut()[ch] =
            (1.0 - m) * params.running_var.data()[ch] + m * var[ch];
    }

    let mut out = Tensor::zeros(input.shape());
    let ov = out.data_mut();
    for bi in 0..b {
        for ch in 0..c {
            let base = (bi * c + ch) * plane;
            let g = params.gamma.data()[ch] * inv_std[ch];
            let off = params.beta.data()[ch] - mean[ch] * g;
            for i in base..base + plane {
                ov[i] = xv[i] * g + off;
            }
        }
    }
    out.check_finite("bn_forward_train")?;
    Ok((out, mean, inv_std))
}

/// Eval-mode forward using running statistics.
pub fn bn_forward_eval(input: &Tensor, params: &BnParams) -> Result<Tensor> {
    check_bn("bn_forward_eval", input, params)?;
    let (b, c, h, w) = (input.dim(0), input.dim(1), input.dim(2), input.dim(3));
    let plane = h * w;
    let xv = input.data();
    let mut out = Tensor::zeros(input.shape());
    let ov = out.data_mut();
    for bi in 0..b {
        for ch in 0..c {
            let base = (bi * c + ch) * plane;
            let g = params.eval_scale(ch);
            let off = params.beta.data()[ch] - params.running_mean.data()[ch] * g;
            for i in base..base + plane {
                ov[i] = xv[i] * g + off;
            }
        }
    }
    out.check_finite("bn_forward_eval")?;
    Ok(out)
}

pub struct BnGrads {
    pub input: Tensor,
    pub gamma: Tensor,
    pub beta: Tensor,
}

/// Backward pass for training-mode batch normalization.
pub fn bn_backward(
    input: &Tensor,
    params: &BnParams,
    mean: &[f32],
    inv_std: &[f32],
    grad_out: &Tensor,
) -> Result<BnGrads> {
    check_bn("bn_backward", input, params)?;
    if grad_out.shape() != input.shape() {
        return Err(Error::ShapeMismatch {
            op: "bn_backward",
            expected: input.shape().to_vec(),
            got: grad_out.shape().to_vec(),
        });
    }
    let (b, c, h, w) = (input.dim(0), input.dim(1), input.dim(2), input.dim(3));
    let n = (b * h * w) as f32;
    let plane = h * w;
    let xv = input.data();
    let gov = grad_out.data();

    let mut gin = Tensor::zeros(input.shape());
    let mut ggamma = Tensor::zeros(&[c]);
    let mut gbeta = Tensor::zeros(&[c]);

    for ch in 0..c {
        // reductions over the normalization set
        let mut sum_g = 0.0f32;
        let mut sum_gx = 0.0f32;
        for bi in 0..b {
            let base = (bi * c + ch) * plane;
            for i in base..base + plane {
                let xhat = (xv[i] - mean[ch]) * inv_std[ch];
                sum_g += gov[i];
                sum_gx += gov[i] * xhat;
            }
        }
        ggamma.data_mut()[ch] = sum_gx;
        gbeta.data_mut()[ch] = sum_g;

        let scale = params.gamma.data()[ch] * inv_std[ch];
        let mean_g = sum_g / n;
        let mean_gx = sum_gx / n;
        let gv = gin.data_mut();
        for bi in 0..b {
            let base = (bi * c + ch) * plane;
            for i in base..base + plane {
                let xhat = (xv[i] - mean[ch]) * inv_std[ch];
                gv[i] = scale * (gov[i] - mean_g - xhat * mean_gx);
            }
        }
    }
    gin.check_finite("bn_backward")?;
    Ok(BnGrads { input: gin, gamma: ggamma, beta: gbeta })
}
