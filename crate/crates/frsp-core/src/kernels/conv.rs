use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Output spatial size of a convolution along one axis.
pub fn conv_out_dim(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - kernel) / stride + 1
}

fn check_conv_shapes(
    op: &'static str,
    input: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
) -> Result<()> {
    if input.rank() != 4 || weight.rank() != 4 || input.dim(1) != weight.dim(1) {
        return Err(Error::ShapeMismatch {
            op,
            expected: weight.shape().to_vec(),
            got: input.shape().to_vec(),
        });
    }
    if let Some(b) = bias {
        if b.shape() != [weight.dim(0)] {
            return Err(Error::ShapeMismatch {
                op,
                expected: vec![weight.dim(0)],
                got: b.shape().to_vec(),
            });
        }
    }
    Ok(())
}

/// Copy the batch into an explicitly zero-padded buffer, `(B, Cin, H+2p,
/// W+2p)`. Padding once up front removes every bounds branch from the hot
/// loops below.
fn pad_input(input: &Tensor, pad: usize) -> (Vec<f32>, usize, usize) {
    let (batch, cin, h, w) = (input.dim(0), input.dim(1), input.dim(2), input.dim(3));
    let (hp, wp) = (h + 2 * pad, w + 2 * pad);
    let mut out = vec![0.0f32; batch * cin * hp * wp];
    let xv = input.data();
    for plane in 0..batch * cin {
        let src = &xv[plane * h * w..(plane + 1) * h * w];
        let dst = &mut out[plane * hp * wp..(plane + 1) * hp * wp];
        for y in 0..h {
            dst[(y + pad) * wp + pad..(y + pad) * wp + pad + w]
                .copy_from_slice(&src[y * w..(y + 1) * w]);
        }
    }
    (out, hp, wp)
}

/// Vector width the matmul microkernel is unrolled for.
const LANES: usize = 8;

fn round_up(v: usize, m: usize) -> usize {
    v.div_ceil(m) * m
}

/// `C (ar x bn) += A (ar x ak) * B (ak x bn)`, row-major, with `ar` a
/// multiple of 4 and `bn` a multiple of [`LANES`]. The 4xLANES accumulator
/// tile lives in registers; this microkernel carries all conv compute.
fn matmul_acc(a: &[f32], ar: usize, ak: usize, b: &[f32], bn: usize, c: &mut [f32]) {
    debug_assert_eq!(ar % 4, 0);
    debug_assert_eq!(bn % LANES, 0);
    for cb in (0..ar).step_by(4) {
        let arow = &a[cb * ak..(cb + 4) * ak];
        for nb in (0..bn).step_by(LANES) {
            let mut acc = [[0.0f32; LANES]; 4];
            for (k, brow) in b.chunks_exact(bn).enumerate() {
                let bseg: &[f32; LANES] = brow[nb..nb + LANES].try_into().unwrap();
                for i in 0..4 {
                    let w = arow[i * ak + k];
                    let t = &mut acc[i];
                    for l in 0..LANES {
                        t[l] += w * bseg[l];
                    }
                }
            }
            for i in 0..4 {
                let crow = &mut c[(cb + i) * bn + nb..(cb + i) * bn + nb + LANES];
                for (cv, av) in crow.iter_mut().zip(&acc[i]) {
                    *cv += av;
                }
            }
        }
    }
}

/// Scratch geometry shared by the forward and backward lowering.
struct Lowering {
    cin: usize,
    kh: usize,
    kw: usize,
    hout: usize,
    wout: usize,
    stride: usize,
    wp: usize,
    /// K = Cin*Kh*Kw patch rows; N = Hout*Wout output positions.
    k: usize,
    n: usize,
    /// N rounded up to the vector width (tail stays zero).
    n8: usize,
}

impl Lowering {
    /// Unfold one padded sample into the `K x N8` patch matrix.
    fn im2col(&self, xpad_sample: &[f32], col: &mut [f32]) {
        let hw_p = xpad_sample.len() / self.cin;
        for ci in 0..self.cin {
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let k = (ci * self.kh + ky) * self.kw + kx;
                    for oy in 0..self.hout {
                        let src = ci * hw_p + (oy * self.stride + ky) * self.wp + kx;
                        let dst = k * self.n8 + oy * self.wout;
                        if self.stride == 1 {
                            col[dst..dst + self.wout]
                                .copy_from_slice(&xpad_sample[src..src + self.wout]);
                        } else {
                            for ox in 0..self.wout {
                                col[dst + ox] = xpad_sample[src + ox * self.stride];
                            }
                        }
                    }
                }
            }
        }
    }

    /// Fold a `K x N8` patch-gradient matrix back into the padded plane
    /// (scatter-add, the transpose of [`Lowering::im2col`]).
    fn col2im_acc(&self, gcol: &[f32], gpad_sample: &mut [f32]) {
        let hw_p = gpad_sample.len() / self.cin;
        for ci in 0..self.cin {
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let k = (ci * self.kh + ky) * self.kw + kx;
                    for oy in 0..self.hout {
                        let dst = ci * hw_p + (oy * self.stride + ky) * self.wp + kx;
                        let src = k * self.n8 + oy * self.wout;
                        if self.stride == 1 {
                            let d = &mut gpad_sample[dst..dst + self.wout];
                            let s = &gcol[src..src + self.wout];
                            for (dv, sv) in d.iter_mut().zip(s) {
                                *dv += sv;
                            }
                        } else {
                            for ox in 0..self.wout {
                                gpad_sample[dst + ox * self.stride] += gcol[src + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Direct 2d convolution. `input` is `(B, Cin, H, W)`, `weight` is
/// `(Cout, Cin, Kh, Kw)`, output `(B, Cout, Hout, Wout)`.
///
/// Lowered to im2col plus a register-blocked matmul; this is the hot path of
/// the whole crate.
pub fn conv2d_forward(
    input: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    check_conv_shapes("conv2d_forward", input, weight, bias)?;
    let (batch, cin, h, w) = (input.dim(0), input.dim(1), input.dim(2), input.dim(3));
    let (cout, kh, kw) = (weight.dim(0), weight.dim(2), weight.dim(3));
    if h + 2 * pad < kh || w + 2 * pad < kw {
        return Err(Error::ShapeMismatch {
            op: "conv2d_forward",
            expected: weight.shape().to_vec(),
            got: input.shape().to_vec(),
        });
    }
    let hout = conv_out_dim(h, kh, stride, pad);
    let wout = conv_out_dim(w, kw, stride, pad);

    let (xpad, hp, wp) = pad_input(input, pad);
    let low = Lowering {
        cin,
        kh,
        kw,
        hout,
        wout,
        stride,
        wp,
        k: cin * kh * kw,
        n: hout * wout,
        n8: round_up(hout * wout, LANES),
    };
    let c4 = round_up(cout, 4);

    // weight rows padded to a multiple of 4 output channels
    let mut wmat = vec![0.0f32; c4 * low.k];
    wmat[..cout * low.k].copy_from_slice(weight.data());

    let mut out = Tensor::zeros(&[batch, cout, hout, wout]);
    let ov = out.data_mut();
    let mut col = vec![0.0f32; low.k * low.n8];
    let mut obuf = vec![0.0f32; c4 * low.n8];

    for b in 0..batch {
        low.im2col(&xpad[b * cin * hp * wp..(b + 1) * cin * hp * wp], &mut col);
        obuf.fill(0.0);
        matmul_acc(&wmat, c4, low.k, &col, low.n8, &mut obuf);
        for co in 0..cout {
            let bias_v = bias.map_or(0.0, |bb| bb.data()[co]);
            let src = &obuf[co * low.n8..co * low.n8 + low.n];
            let dst = &mut ov[(b * cout + co) * low.n..(b * cout + co + 1) * low.n];
            for (d, s) in dst.iter_mut().zip(src) {
                *d = s + bias_v;
            }
        }
    }
    out.check_finite("conv2d_forward")?;
    Ok(out)
}

/// Gradients produced by [`conv2d_backward`].
pub struct ConvGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

/// Backward pass of [`conv2d_forward`] given the saved forward input.
pub fn conv2d_backward(
    input: &Tensor,
    weight: &Tensor,
    has_bias: bool,
    stride: usize,
    pad: usize,
    grad_out: &Tensor,
) -> Result<ConvGrads> {
    check_conv_shapes("conv2d_backward", input, weight, None)?;
    let (batch, cin, h, w) = (input.dim(0), input.dim(1), input.dim(2), input.dim(3));
    let (cout, kh, kw) = (weight.dim(0), weight.dim(2), weight.dim(3));
    let hout = conv_out_dim(h, kh, stride, pad);
    let wout = conv_out_dim(w, kw, stride, pad);
    if grad_out.shape() != [batch, cout, hout, wout] {
        return Err(Error::ShapeMismatch {
            op: "conv2d_backward",
            expected: vec![batch, cout, hout, wout],
            got: grad_out.shape().to_vec(),
        });
    }

    let mut gin = Tensor::zeros(input.shape());
    let mut gw = Tensor::zeros(weight.shape());
    let wv = weight.data();
    let gov = grad_out.data();

    let gbias = if has_bias {
        let mut gb = Tensor::zeros(&[cout]);
        let gbv = gb.data_mut();
        for b in 0..batch {
            for co in 0..cout {
                let o_base = (b * cout + co) * hout * wout;
                gbv[co] += gov[o_base..o_base + hout * wout].iter().sum::<f32>();
            }
        }
        Some(gb)
    } else {
        None
    };

    let (xpad, hp, wp) = pad_input(input, pad);
    let low = Lowering {
        cin,
        kh,
        kw,
        hout,
        wout,
        stride,
        wp,
        k: cin * kh * kw,
        n: hout * wout,
        n8: round_up(hout * wout, LANES),
    };
    let k4 = round_up(low.k, 4);

    // transposed weights (K4 x Cout) for the grad-input matmul
    let mut wt = vec![0.0f32; k4 * cout];
    for co in 0..cout {
        for k in 0..low.k {
            wt[k * cout + co] = wv[co * low.k + k];
        }
    }

    let ginv = gin.data_mut();
    let gwv = gw.data_mut();
    let mut col = vec![0.0f32; low.k * low.n8];
    let mut gbuf = vec![0.0f32; cout * low.n8];
    let mut gcol = vec![0.0f32; k4 * low.n8];
    let mut gpad = vec![0.0f32; cin * hp * wp];

    for b in 0..batch {
        low.im2col(&xpad[b * cin * hp * wp..(b + 1) * cin * hp * wp], &mut col);
        // upstream rows padded out to the vector width
        for co in 0..cout {
            let src = &gov[(b * cout + co) * low.n..(b * cout + co + 1) * low.n];
            gbuf[co * low.n8..co * low.n8 + low.n].copy_from_slice(src);
        }

        // weight gradient: gw[co][k] += <gout[co], col[k]> over output positions
        for co in 0..cout {
            let grow = &gbuf[co * low.n8..(co + 1) * low.n8];
            let gwrow = &mut gwv[co * low.k..(co + 1) * low.k];
            for (k, gw_k) in gwrow.iter_mut().enumerate() {
                let crow = &col[k * low.n8..(k + 1) * low.n8];
                let mut acc = 0.0f32;
                for (g, c) in grow.iter().zip(crow) {
                    acc += g * c;
                }
                *gw_k += acc;
            }
        }

        // input gradient: gcol = W^T * gout, folded back with col2im
        gcol.fill(0.0);
        matmul_acc(&wt, k4, cout, &gbuf, low.n8, &mut gcol);
        gpad.fill(0.0);
        low.col2im_acc(&gcol[..low.k * low.n8], &mut gpad);
        for ci in 0..cin {
            let src = &gpad[ci * hp * wp..(ci + 1) * hp * wp];
            let dst = &mut ginv[(b * cin + ci) * h * w..(b * cin + ci + 1) * h * w];
            for y in 0..h {
                dst[y * w..(y + 1) * w]
                    .copy_from_slice(&src[(y + pad) * wp + pad..(y + pad) * wp + pad + w]);
            }
        }
    }
    gin.check_finite("conv2d_backward")?;
    gw.check_finite("conv2d_backward")?;
    Ok(ConvGrads { input: gin, weight: gw, bias: gbias })
}
