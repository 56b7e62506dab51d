//! Relevance back-propagation with the alpha/beta decomposition rule.
//!
//! Starting from a Kronecker delta on the true class at the logits, relevance
//! is redistributed backwards layer by layer: affine layers (linear, conv,
//! gap) split each output's relevance over its inputs proportionally to the
//! positive and negative parts of `a_p * w_pq`, weighted `alpha` and `beta`;
//! relu passes relevance through unchanged; maxpool routes winner-take-all;
//! `add` junctions split proportionally to branch activations. Batch
//! statistics layers are folded into the adjacent convolution.
//!
//! Bias terms are excluded from redistribution, so on bias-free networks the
//! per-layer relevance sum is conserved (up to the epsilon guard).

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::{ActivationTrace, LayerKind, LayerParams, ModelGraph, INPUT};
use crate::tensor::Tensor;

/// Maxpool redistribution rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolRule {
    /// All relevance of a window goes to the recorded argmax position.
    WinnerTakeAll,
    /// Split proportionally to the window activations (epsilon-guarded).
    Proportional,
}

/// How batch statistics layers are treated during relevance propagation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnHandling {
    /// Fold per-channel scale into the adjacent conv's effective weights.
    Fold,
    /// Treat bn as a pass-through.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrpConfig {
    alpha: f32,
    beta: f32,
    /// Denominator guard: a fraction is defined as 0 when its denominator
    /// magnitude is below this.
    pub epsilon: f32,
    pub pool_rule: PoolRule,
    pub bn_handling: BnHandling,
}

impl LrpConfig {
    /// `alpha - beta == 1` is enforced here; it is what makes the rule
    /// conserving.
    pub fn new(alpha: f32, beta: f32) -> Result<Self> {
        if (alpha - beta - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidConfig(alloc::format!(
                "alpha - beta must equal 1 (got alpha={alpha}, beta={beta})"
            )));
        }
        Ok(LrpConfig {
            alpha,
            beta,
            epsilon: 1e-9,
            pool_rule: PoolRule::WinnerTakeAll,
            bn_handling: BnHandling::Fold,
        })
    }

    pub fn alpha(&self) -> f32 {
        self.alpha
    }

    pub fn beta(&self) -> f32 {
        self.beta
    }
}

impl Default for LrpConfig {
    /// The usual operating point, alpha=2 beta=1.
    fn default() -> Self {
        LrpConfig::new(2.0, 1.0).expect("2 - 1 == 1")
    }
}

/// Per-layer relevance tensors for one batch, shapes mirroring the
/// activation trace.
#[derive(Debug, Clone)]
pub struct RelevanceMap {
    pub per_layer: Vec<Tensor>,
}

/// Kronecker delta relevance at the output layer for one sample.
pub fn init_output_relevance(label: usize, classes: usize) -> Result<Tensor> {
    if label >= classes {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    let mut r = Tensor::zeros(&[classes]);
    r.data_mut()[label] = 1.0;
    Ok(r)
}

/// Batched delta initialization, `(B, classes)`.
pub fn init_output_relevance_batch(labels: &[usize], classes: usize) -> Result<Tensor> {
    let mut r = Tensor::zeros(&[labels.len(), classes]);
    for (i, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        r.data_mut()[i * classes + label] = 1.0;
    }
    Ok(r)
}

/// Per-output scatter coefficients `(cp, cm)` such that each input's share is
/// `prod.max(0)*cp - prod.min(0)*cm`.
///
/// With both sign populations present this is the plain alpha/beta split,
/// whose total is `(alpha - beta) * r = r`. When one population is empty its
/// fraction is 0 and the unit mass falls entirely on the surviving side — an
/// an all-positive path passes relevance through unchanged, and conservation
/// survives the sparse single-sign outputs that relu networks produce in
/// volume. Only when both denominators are under the guard (a dead window)
/// is the relevance dropped.
#[inline]
fn split_coefficients(r: f32, zp: f32, zm: f32, cfg: &LrpConfig) -> (f32, f32) {
    let has_p = zp >= cfg.epsilon;
    let has_m = -zm >= cfg.epsilon;
    match (has_p, has_m) {
        (true, true) => (cfg.alpha * r / zp, cfg.beta * r / zm),
        (true, false) => (r / zp, 0.0),
        (false, true) => (0.0, -r / zm),
        (false, false) => (0.0, 0.0),
    }
}

/// Alpha/beta redistribution through a fully connected layer.
/// `activations` is `(B, F)`, `weight` `(Out, F)`, `upstream` `(B, Out)`;
/// returns `(B, F)`. Bias is excluded from redistribution by construction.
pub fn relevance_backward_affine(
    activations: &Tensor,
    weight: &Tensor,
    upstream: &Tensor,
    cfg: &LrpConfig,
) -> Result<Tensor> {
    let (b, f) = (activations.dim(0), activations.dim(1));
    let out_dim = weight.dim(0);
    if weight.dim(1) != f || upstream.shape() != [b, out_dim] {
        return Err(Error::ShapeMismatch {
            op: "relevance_backward_affine",
            expected: vec![b, out_dim],
            got: upstream.shape().to_vec(),
        });
    }
    let av = activations.data();
    let wv = weight.data();
    let rv = upstream.data();
    let mut down = Tensor::zeros(&[b, f]);
    let dv = down.data_mut();
    for i in 0..b {
        let arow = &av[i * f..(i + 1) * f];
        for q in 0..out_dim {
            let wrow = &wv[q * f..(q + 1) * f];
            let mut zp = 0.0f32;
            let mut zm = 0.0f32;
            for (a, w) in arow.iter().zip(wrow) {
                let prod = a * w;
                zp += prod.max(0.0);
                zm += prod.min(0.0);
            }
            let (cp, cm) = split_coefficients(rv[i * out_dim + q], zp, zm, cfg);
            if cp == 0.0 && cm == 0.0 {
                continue;
            }
            let drow = &mut dv[i * f..(i + 1) * f];
            for ((d, a), w) in drow.iter_mut().zip(arow).zip(wrow) {
                let prod = a * w;
                *d += prod.max(0.0) * cp - prod.min(0.0) * cm;
            }
        }
    }
    Ok(down)
}

/// Alpha/beta redistribution through a convolution (its affine unrolling).
/// `scale` optionally multiplies each output channel's weights, which is how
/// a downstream bn layer is folded in.
pub fn relevance_backward_conv(
    activations: &Tensor,
    weight: &Tensor,
    stride: usize,
    pad: usize,
    scale: Option<&[f32]>,
    upstream: &Tensor,
    cfg: &LrpConfig,
) -> Result<Tensor> {
    let (batch, cin, h, w) = (
        activations.dim(0),
        activations.dim(1),
        activations.dim(2),
        activations.dim(3),
    );
    let (cout, kh, kw) = (weight.dim(0), weight.dim(2), weight.dim(3));
    let hout = crate::kernels::conv_out_dim(h, kh, stride, pad);
    let wout = crate::kernels::conv_out_dim(w, kw, stride, pad);
    if weight.dim(1) != cin || upstream.shape() != [batch, cout, hout, wout] {
        return Err(Error::ShapeMismatch {
            op: "relevance_backward_conv",
            expected: vec![batch, cout, hout, wout],
            got: upstream.shape().to_vec(),
        });
    }

    let av = activations.data();
    let wv = weight.data();
    let rv = upstream.data();
    let plane = hout * wout;

    // pass 1: positive/negative denominators per output position
    let mut zp = vec![0.0f32; batch * cout * plane];
    let mut zm = vec![0.0f32; batch * cout * plane];
    for b in 0..batch {
        for co in 0..cout {
            let wscale = scale.map_or(1.0, |s| s[co]);
            let o_base = (b * cout + co) * plane;
            for ci in 0..cin {
                let x_base = (b * cin + ci) * h * w;
                let w_base = (co * cin + ci) * kh * kw;
                for ky in 0..kh {
                    for kx in 0..kw {
                        let wgt = wv[w_base + ky * kw + kx] * wscale;
                        let ox_lo = if pad > kx { (pad - kx + stride - 1) / stride } else { 0 };
                        let ox_hi =
                            wout.min(if w + pad > kx { (w + pad - kx - 1) / stride + 1 } else { 0 });
                        if ox_lo >= ox_hi {
                            continue;
                        }
                        for oy in 0..hout {
                            let iy = oy * stride + ky;
                            if iy < pad || iy >= h + pad {
                                continue;
                            }
                            let iy = iy - pad;
                            let orow = o_base + oy * wout;
                            let irow = x_base + iy * w;
                            for ox in ox_lo..ox_hi {
                                let ix = ox * stride + kx - pad;
                                let prod = wgt * av[irow + ix];
                                zp[orow + ox] += prod.max(0.0);
                                zm[orow + ox] += prod.min(0.0);
                            }
                        }
                    }
                }
            }
        }
    }

    // pass 2: per-output coefficients, with the epsilon guard
    let mut cp = zp;
    let mut cm = zm;
    for i in 0..cp.len() {
        let (p, m) = split_coefficients(rv[i], cp[i], cm[i], cfg);
        cp[i] = p;
        cm[i] = m;
    }

    // pass 3: scatter back to the inputs
    let mut down = Tensor::zeros(activations.shape());
    let dv = down.data_mut();
    for b in 0..batch {
        for co in 0..cout {
            let wscale = scale.map_or(1.0, |s| s[co]);
            let o_base = (b * cout + co) * plane;
            for ci in 0..cin {
                let x_base = (b * cin + ci) * h * w;
                let w_base = (co * cin + ci) * kh * kw;
                for ky in 0..kh {
                    for kx in 0..kw {
                        let wgt = wv[w_base + ky * kw + kx] * wscale;
                        let ox_lo = if pad > kx { (pad - kx + stride - 1) / stride } else { 0 };
                        let ox_hi =
                            wout.min(if w + pad > kx { (w + pad - kx - 1) / stride + 1 } else { 0 });
                        if ox_lo >= ox_hi {
                            continue;
                        }
                        for oy in 0..hout {
                            let iy = oy * stride + ky;
                            if iy < pad || iy >= h + pad {
                                continue;
                            }
                            let iy = iy - pad;
                            let orow = o_base + oy * wout;
                            let irow = x_base + iy * w;
                            for ox in ox_lo..ox_hi {
                                let ix = ox * stride + kx - pad;
                                let prod = wgt * av[irow + ix];
                                dv[irow + ix] +=
                                    prod.max(0.0) * cp[orow + ox] - prod.min(0.0) * cm[orow + ox];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(down)
}

/// Relu is absorbed into the affine step; relevance passes through unchanged.
pub fn relevance_through_relu(upstream: &Tensor) -> Tensor {
    upstream.clone()
}

/// Maxpool redistribution using the recorded winners.
pub fn relevance_through_maxpool(
    input: &Tensor,
    argmax: &[u32],
    upstream: &Tensor,
    cfg: &LrpConfig,
) -> Result<Tensor> {
    if argmax.len() != upstream.len() {
        return Err(Error::ShapeMismatch {
            op: "relevance_through_maxpool",
            expected: vec![argmax.len()],
            got: vec![upstream.len()],
        });
    }
    let mut down = Tensor::zeros(input.shape());
    match cfg.pool_rule {
        PoolRule::WinnerTakeAll => {
            let dv = down.data_mut();
            for (&idx, &r) in argmax.iter().zip(upstream.data()) {
                dv[idx as usize] += r;
            }
        }
        PoolRule::Proportional => {
            let (b, c, h, w) = (input.dim(0), input.dim(1), input.dim(2), input.dim(3));
            let (ho, wo) = (h / 2, w / 2);
            let xv = input.data();
            let dv = down.data_mut();
            let rv = upstream.data();
            for plane in 0..b * c {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let i0 = plane * h * w + (2 * oy) * w + 2 * ox;
                        let win = [i0, i0 + 1, i0 + w, i0 + w + 1];
                        let r = rv[plane * ho * wo + oy * wo + ox];
                        let zp: f32 = win.iter().map(|&i| xv[i].max(0.0)).sum();
                        let zm: f32 = win.iter().map(|&i| xv[i].min(0.0)).sum();
                        let (cp, cm) = split_coefficients(r, zp, zm, cfg);
                        for &i in &win {
                            dv[i] += xv[i].max(0.0) * cp - xv[i].min(0.0) * cm;
                        }
                    }
                }
            }
        }
    }
    Ok(down)
}

/// Global average pooling redistribution. The uniform 1/(H*W) weights cancel
/// in the fractions, so the split is proportional to the sign-separated
/// activations of each plane.
pub fn relevance_through_gap(input: &Tensor, upstream: &Tensor, cfg: &LrpConfig) -> Result<Tensor> {
    let (b, c, h, w) = (input.dim(0), input.dim(1), input.dim(2), input.dim(3));
    if upstream.shape() != [b, c] {
        return Err(Error::ShapeMismatch {
            op: "relevance_through_gap",
            expected: vec![b, c],
            got: upstream.shape().to_vec(),
        });
    }
    let mut down = Tensor::zeros(input.shape());
    let xv = input.data();
    let dv = down.data_mut();
    for plane in 0..b * c {
        let xs = &xv[plane * h * w..(plane + 1) * h * w];
        let r = upstream.data()[plane];
        let zp: f32 = xs.iter().map(|v| v.max(0.0)).sum();
        let zm: f32 = xs.iter().map(|v| v.min(0.0)).sum();
        let (cp, cm) = split_coefficients(r, zp, zm, cfg);
        let ds = &mut dv[plane * h * w..(plane + 1) * h * w];
        for (d, x) in ds.iter_mut().zip(xs) {
            *d = x.max(0.0) * cp - x.min(0.0) * cm;
        }
    }
    Ok(down)
}

/// Split relevance at an `add` junction proportionally to each branch's
/// contribution; positions where the branches sum to (near) zero split 50/50.
pub fn relevance_through_add(
    branch_a: &Tensor,
    branch_b: &Tensor,
    upstream: &Tensor,
    cfg: &LrpConfig,
) -> Result<(Tensor, Tensor)> {
    if branch_a.shape() != upstream.shape() || branch_b.shape() != upstream.shape() {
        return Err(Error::ShapeMismatch {
            op: "relevance_through_add",
            expected: upstream.shape().to_vec(),
            got: branch_a.shape().to_vec(),
        });
    }
    let mut ra = Tensor::zeros(upstream.shape());
    let mut rb = Tensor::zeros(upstream.shape());
    for i in 0..upstream.len() {
        let (a, b, r) = (branch_a.data()[i], branch_b.data()[i], upstream.data()[i]);
        let sum = a + b;
        let share_a = if sum.abs() < cfg.epsilon { 0.5 * r } else { r * a / sum };
        ra.data_mut()[i] = share_a;
        // the complement rather than r*b/sum, so the pair sums to r exactly
        // even where the branches nearly cancel
        rb.data_mut()[i] = r - share_a;
    }
    Ok((ra, rb))
}

/// The bn layer folded into its upstream conv: per-channel effective scales
/// from the running statistics.
fn fold_scales(model: &ModelGraph, conv_id: usize) -> Option<Vec<f32>> {
    let consumers = model.consumers_of(conv_id);
    if consumers.len() != 1 {
        return None;
    }
    match (&model.layers[consumers[0]].kind, &model.params[consumers[0]]) {
        (LayerKind::Bn { channels }, LayerParams::Bn(bn)) => {
            Some((0..*channels).map(|c| bn.eval_scale(c)).collect())
        }
        _ => None,
    }
}

/// One backward sweep computing relevance at every layer for a whole batch.
///
/// The trace must come from a forward pass over the current model; a shape
/// mismatch anywhere signals the model mutated in between.
pub fn full_relevance_pass(
    model: &ModelGraph,
    trace: &ActivationTrace,
    labels: &[usize],
    cfg: &LrpConfig,
) -> Result<RelevanceMap> {
    let n = model.num_layers();
    if trace.outputs.len() != n || trace.batch_size() != labels.len() {
        return Err(Error::TraceMismatch { layer: trace.outputs.len() });
    }
    let mut slots: Vec<Option<Tensor>> = vec![None; n];
    slots[n - 1] = Some(init_output_relevance_batch(labels, model.classes)?);
    let mut map: Vec<Option<Tensor>> = vec![None; n];

    let push_to = |src: usize, r: Tensor, slots: &mut [Option<Tensor>]| -> Result<()> {
        if src == INPUT {
            return Ok(());
        }
        match &mut slots[src] {
            Some(acc) => acc.add_assign(&r).map_err(|_| Error::TraceMismatch { layer: src })?,
            slot @ None => *slot = Some(r),
        }
        Ok(())
    };

    for id in (0..n).rev() {
        let upstream = match slots[id].take() {
            Some(r) => r,
            None => continue,
        };
        if upstream.shape() != trace.outputs[id].shape() {
            return Err(Error::TraceMismatch { layer: id });
        }
        let src0 = model.layers[id].inputs[0];
        match (&model.layers[id].kind, &model.params[id]) {
            (LayerKind::Conv { stride, pad, .. }, LayerParams::Conv { weight, .. }) => {
                let a = trace.input_of(model, id, 0);
                let scales = if cfg.bn_handling == BnHandling::Fold {
                    fold_scales(model, id)
                } else {
                    None
                };
                let down = relevance_backward_conv(
                    a,
                    weight,
                    *stride,
                    *pad,
                    scales.as_deref(),
                    &upstream,
                    cfg,
                )?;
                push_to(src0, down, &mut slots)?;
            }
            (LayerKind::Bn { .. }, _) => {
                // fold: the scale is applied at the conv; identity: pass-through
                push_to(src0, upstream.clone(), &mut slots)?;
            }
            (LayerKind::Relu, _) => {
                push_to(src0, relevance_through_relu(&upstream), &mut slots)?;
            }
            (LayerKind::Maxpool, _) => {
                let a = trace.input_of(model, id, 0);
                let arg = trace.argmax[id].as_ref().ok_or(Error::TraceMismatch { layer: id })?;
                let down = relevance_through_maxpool(a, arg, &upstream, cfg)?;
                push_to(src0, down, &mut slots)?;
            }
            (LayerKind::Gap, _) => {
                let a = trace.input_of(model, id, 0);
                let down = relevance_through_gap(a, &upstream, cfg)?;
                push_to(src0, down, &mut slots)?;
            }
            (LayerKind::Linear { in_features, .. }, LayerParams::Linear { weight, .. }) => {
                let a = trace.input_of(model, id, 0);
                let flat = a.reshape(&[a.dim(0), *in_features])?;
                let down = relevance_backward_affine(&flat, weight, &upstream, cfg)?;
                push_to(src0, down.reshape(a.shape())?, &mut slots)?;
            }
            (LayerKind::Add, _) => {
                let a = trace.input_of(model, id, 0);
                let b = trace.input_of(model, id, 1);
                let (ra, rb) = relevance_through_add(a, b, &upstream, cfg)?;
                push_to(src0, ra, &mut slots)?;
                push_to(model.layers[id].inputs[1], rb, &mut slots)?;
            }
            _ => return Err(Error::InvalidConfig("layer kind/params mismatch".into())),
        }
        map[id] = Some(upstream);
    }

    let per_layer = map
        .into_iter()
        .enumerate()
        .map(|(id, r)| r.ok_or(Error::TraceMismatch { layer: id }))
        .collect::<Result<Vec<_>>>()?;
    Ok(RelevanceMap { per_layer })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg21() -> LrpConfig {
        LrpConfig::new(2.0, 1.0).unwrap()
    }

    #[test]
    fn alpha_minus_beta_must_be_one() {
        assert!(LrpConfig::new(2.0, 0.5).is_err());
        assert!(LrpConfig::new(1.0, 0.0).is_ok());
    }

    #[test]
    fn delta_initialization() {
        let r = init_output_relevance(2, 4).unwrap();
        assert_eq!(r.data(), [0.0, 0.0, 1.0, 0.0]);
        let r = init_output_relevance(0, 1).unwrap();
        assert_eq!(r.data(), [1.0]);
        assert!(init_output_relevance(4, 4).is_err());
    }

    #[test]
    fn worked_affine_case() {
        // a=[1,1], w: input0 -> 2, input1 -> -1, R=[1], alpha=2 beta=1
        let a = Tensor::from_vec(&[1, 2], vec![1.0, 1.0]).unwrap();
        let w = Tensor::from_vec(&[1, 2], vec![2.0, -1.0]).unwrap();
        let r = Tensor::from_vec(&[1, 1], vec![1.0]).unwrap();
        let down = relevance_backward_affine(&a, &w, &r, &cfg21()).unwrap();
        assert_eq!(down.data(), [2.0, -1.0]);
        assert!((down.sum() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn all_positive_single_path_passes_through() {
        // with no negative contributions the unit mass falls on the positive
        // side, so relevance passes through unchanged for every valid (a, b)
        let a = Tensor::from_vec(&[1, 1], vec![1.0]).unwrap();
        let w = Tensor::from_vec(&[1, 1], vec![1.0]).unwrap();
        let r = Tensor::from_vec(&[1, 1], vec![0.7]).unwrap();
        for cfg in [cfg21(), LrpConfig::new(1.0, 0.0).unwrap(), LrpConfig::new(3.0, 2.0).unwrap()] {
            let down = relevance_backward_affine(&a, &w, &r, &cfg).unwrap();
            assert!((down.data()[0] - 0.7).abs() < 1e-6);
        }
    }

    #[test]
    fn mixed_sign_layer_conserves_relevance() {
        let a = Tensor::from_vec(&[1, 3], vec![0.5, 1.0, 2.0]).unwrap();
        let w = Tensor::from_vec(&[2, 3], vec![1.0, -0.5, 0.25, -1.0, 2.0, -0.125]).unwrap();
        let r = Tensor::from_vec(&[1, 2], vec![0.4, 0.6]).unwrap();
        for cfg in [cfg21(), LrpConfig::new(3.0, 2.0).unwrap()] {
            let down = relevance_backward_affine(&a, &w, &r, &cfg).unwrap();
            assert!((down.sum() - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn z_plus_gives_zero_to_negative_inputs() {
        let a = Tensor::from_vec(&[1, 2], vec![1.0, 1.0]).unwrap();
        let w = Tensor::from_vec(&[1, 2], vec![2.0, -1.0]).unwrap();
        let r = Tensor::from_vec(&[1, 1], vec![1.0]).unwrap();
        let cfg = LrpConfig::new(1.0, 0.0).unwrap();
        let down = relevance_backward_affine(&a, &w, &r, &cfg).unwrap();
        assert_eq!(down.data()[1], 0.0);
        assert!((down.data()[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn maxpool_winner_takes_all() {
        let x = Tensor::from_vec(&[1, 1, 2, 2], vec![0.0, 1.0, 0.5, 0.25]).unwrap();
        let (_, arg) = crate::kernels::maxpool2_forward(&x).unwrap();
        let r = Tensor::from_vec(&[1, 1, 1, 1], vec![0.5]).unwrap();
        let down = relevance_through_maxpool(&x, &arg, &r, &cfg21()).unwrap();
        assert_eq!(down.data(), [0.0, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn add_splits_proportionally() {
        let a = Tensor::from_vec(&[1, 1, 1, 1], vec![3.0]).unwrap();
        let b = Tensor::from_vec(&[1, 1, 1, 1], vec![1.0]).unwrap();
        let r = Tensor::from_vec(&[1, 1, 1, 1], vec![1.0]).unwrap();
        let (ra, rb) = relevance_through_add(&a, &b, &r, &cfg21()).unwrap();
        assert!((ra.data()[0] - 0.75).abs() < 1e-6);
        assert!((rb.data()[0] - 0.25).abs() < 1e-6);

        let (ra, rb) = relevance_through_add(&b, &b, &r, &cfg21()).unwrap();
        assert_eq!(ra.data()[0], rb.data()[0]);
    }
}
