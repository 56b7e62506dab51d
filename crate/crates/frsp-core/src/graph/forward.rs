use alloc::vec;
use alloc::vec::Vec;

use super::{LayerKind, LayerParams, ModelGraph, INPUT};
use crate::error::{Error, Result};
use crate::kernels;
use crate::tensor::Tensor;

/// Batch statistics behavior: `Train` normalizes by batch statistics and
/// updates the running estimates; `Eval` uses the running estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-layer outputs of one forward pass, plus the records needed for the
/// backward pass and for relevance redistribution.
#[derive(Debug, Clone)]
pub struct ActivationTrace {
    /// The network input the pass was run on.
    pub input: Tensor,
    /// Output tensor of every layer, indexed by layer id.
    pub outputs: Vec<Tensor>,
    /// Winner positions (flat input indices) per maxpool layer.
    pub argmax: Vec<Option<Vec<u32>>>,
    /// Saved `(mean, inv_std)` per bn layer (train mode only).
    pub bn_saved: Vec<Option<(Vec<f32>, Vec<f32>)>>,
}

impl ActivationTrace {
    pub fn logits(&self) -> &Tensor {
        self.outputs.last().expect("trace of empty model")
    }

    pub fn batch_size(&self) -> usize {
        self.input.dim(0)
    }

    /// Activation feeding layer `id`'s input port `port`.
    pub fn input_of<'a>(&'a self, model: &ModelGraph, id: usize, port: usize) -> &'a Tensor {
        let src = model.layers[id].inputs[port];
        if src == INPUT {
            &self.input
        } else {
            &self.outputs[src]
        }
    }
}

/// Per-layer parameter gradients, in the same canonical order as
/// [`LayerParams::trainable`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub by_layer: Vec<Vec<Tensor>>,
}

fn check_input(model: &ModelGraph, x: &Tensor) -> Result<()> {
    let (c, h, w) = model.input_shape;
    if x.rank() != 4 || x.dim(1) != c || x.dim(2) != h || x.dim(3) != w {
        return Err(Error::ShapeMismatch {
            op: "forward",
            expected: vec![x.dim(0), c, h, w],
            got: x.shape().to_vec(),
        });
    }
    Ok(())
}

/// Forward of every layer kind except bn (which differs by mode).
fn plain_forward(
    kind: &LayerKind,
    params: &LayerParams,
    x0: &Tensor,
    x1: Option<&Tensor>,
) -> Result<(Tensor, Option<Vec<u32>>)> {
    let out = match (kind, params) {
        (LayerKind::Conv { stride, pad, .. }, LayerParams::Conv { weight, bias }) => {
            (kernels::conv2d_forward(x0, weight, bias.as_ref(), *stride, *pad)?, None)
        }
        (LayerKind::Relu, _) => (kernels::relu_forward(x0), None),
        (LayerKind::Maxpool, _) => {
            let (out, arg) = kernels::maxpool2_forward(x0)?;
            (out, Some(arg))
        }
        (LayerKind::Gap, _) => (kernels::global_avgpool_forward(x0)?, None),
        (LayerKind::Linear { in_features, .. }, LayerParams::Linear { weight, bias }) => {
            let flat = x0.reshape(&[x0.dim(0), *in_features])?;
            (kernels::linear_forward(&flat, weight, bias.as_ref())?, None)
        }
        (LayerKind::Add, _) => {
            let mut out = x0.clone();
            out.add_assign(x1.expect("add arity"))?;
            (out, None)
        }
        _ => return Err(Error::InvalidConfig("layer kind/params mismatch".into())),
    };
    Ok(out)
}

impl ModelGraph {
    /// Forward pass. `Train` mode requires `&mut` because bn running
    /// statistics are updated; [`ModelGraph::forward_eval`] is the read-only
    /// path.
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<ActivationTrace> {
        if mode == Mode::Eval {
            return self.forward_eval(x);
        }
        check_input(self, x)?;
        let n = self.layers.len();
        let mut trace = ActivationTrace {
            input: x.clone(),
            outputs: Vec::with_capacity(n),
            argmax: vec![None; n],
            bn_saved: vec![None; n],
        };
        for id in 0..n {
            let src0 = self.layers[id].inputs[0];
            let out = if matches!(self.layers[id].kind, LayerKind::Bn { .. }) {
                let x0 = if src0 == INPUT { &trace.input } else { &trace.outputs[src0] };
                match &mut self.params[id] {
                    LayerParams::Bn(bn) => {
                        let (out, mean, inv_std) = kernels::bn_forward_train(x0, bn)?;
                        trace.bn_saved[id] = Some((mean, inv_std));
                        out
                    }
                    _ => return Err(Error::InvalidConfig("layer kind/params mismatch".into())),
                }
            } else {
                let x0 = if src0 == INPUT { &trace.input } else { &trace.outputs[src0] };
                let x1 = self.layers[id].inputs.get(1).map(|&s| {
                    if s == INPUT {
                        &trace.input
                    } else {
                        &trace.outputs[s]
                    }
                });
                let (out, arg) = plain_forward(&self.layers[id].kind, &self.params[id], x0, x1)?;
                if let Some(arg) = arg {
                    trace.argmax[id] = Some(arg);
                }
                out
            };
            trace.outputs.push(out);
        }
        Ok(trace)
    }

    /// Read-only eval forward (running statistics, no mutation).
    pub fn forward_eval(&self, x: &Tensor) -> Result<ActivationTrace> {
        check_input(self, x)?;
        let n = self.layers.len();
        let mut trace = ActivationTrace {
            input: x.clone(),
            outputs: Vec::with_capacity(n),
            argmax: vec![None; n],
            bn_saved: vec![None; n],
        };
        for id in 0..n {
            let src0 = self.layers[id].inputs[0];
            let x0 = if src0 == INPUT { &trace.input } else { &trace.outputs[src0] };
            let out = if let (LayerKind::Bn { .. }, LayerParams::Bn(bn)) =
                (&self.layers[id].kind, &self.params[id])
            {
                kernels::bn_forward_eval(x0, bn)?
            } else {
                let x1 = self.layers[id].inputs.get(1).map(|&s| {
                    if s == INPUT {
                        &trace.input
                    } else {
                        &trace.outputs[s]
                    }
                });
                let (out, arg) = plain_forward(&self.layers[id].kind, &self.params[id], x0, x1)?;
                if let Some(arg) = arg {
                    trace.argmax[id] = Some(arg);
                }
                out
            };
            trace.outputs.push(out);
        }
        Ok(trace)
    }

    /// Backward pass through the whole graph given the gradient at the logits.
    pub fn backward(&self, trace: &ActivationTrace, grad_logits: &Tensor) -> Result<Gradients> {
        let n = self.layers.len();
        if trace.outputs.len() != n {
            return Err(Error::TraceMismatch { layer: trace.outputs.len() });
        }
        let mut gouts: Vec<Option<Tensor>> = vec![None; n];
        gouts[n - 1] = Some(grad_logits.clone());
        let mut grads = Gradients { by_layer: vec![Vec::new(); n] };

        fn push_to(src: usize, g: Tensor, gouts: &mut [Option<Tensor>]) -> Result<()> {
            if src == INPUT {
                return Ok(());
            }
            match &mut gouts[src] {
                Some(acc) => acc.add_assign(&g)?,
                slot @ None => *slot = Some(g),
            }
            Ok(())
        }

        for id in (0..n).rev() {
            let go = match gouts[id].take() {
                Some(g) => g,
                None => continue,
            };
            if go.shape() != trace.outputs[id].shape() {
                return Err(Error::TraceMismatch { layer: id });
            }
            match (&self.layers[id].kind, &self.params[id]) {
                (LayerKind::Conv { stride, pad, .. }, LayerParams::Conv { weight, bias }) => {
                    let x = trace.input_of(self, id, 0);
                    let g = kernels::conv2d_backward(x, weight, bias.is_some(), *stride, *pad, &go)?;
                    grads.by_layer[id].push(g.weight);
                    if let Some(gb) = g.bias {
                        grads.by_layer[id].push(gb);
                    }
                    push_to(self.layers[id].inputs[0], g.input, &mut gouts)?;
                }
                (LayerKind::Bn { .. }, LayerParams::Bn(bn)) => {
                    let (mean, inv_std) = trace.bn_saved[id]
                        .as_ref()
                        .ok_or(Error::TraceMismatch { layer: id })?;
                    let x = trace.input_of(self, id, 0);
                    let g = kernels::bn_backward(x, bn, mean, inv_std, &go)?;
                    grads.by_layer[id].push(g.gamma);
                    grads.by_layer[id].push(g.beta);
                    push_to(self.layers[id].inputs[0], g.input, &mut gouts)?;
                }
                (LayerKind::Relu, _) => {
                    let x = trace.input_of(self, id, 0);
                    let g = kernels::relu_backward(x, &go)?;
                    push_to(self.layers[id].inputs[0], g, &mut gouts)?;
                }
                (LayerKind::Maxpool, _) => {
                    let x = trace.input_of(self, id, 0);
                    let arg = trace.argmax[id].as_ref().ok_or(Error::TraceMismatch { layer: id })?;
                    let g = kernels::maxpool2_backward(x.shape(), arg, &go)?;
                    push_to(self.layers[id].inputs[0], g, &mut gouts)?;
                }
                (LayerKind::Gap, _) => {
                    let x = trace.input_of(self, id, 0);
                    let g = kernels::global_avgpool_backward(x.shape(), &go)?;
                    push_to(self.layers[id].inputs[0], g, &mut gouts)?;
                }
                (LayerKind::Linear { in_features, .. }, LayerParams::Linear { weight, bias }) => {
                    let x = trace.input_of(self, id, 0);
                    let flat = x.reshape(&[x.dim(0), *in_features])?;
                    let g = kernels::linear_backward(&flat, weight, bias.is_some(), &go)?;
                    grads.by_layer[id].push(g.weight);
                    if let Some(gb) = g.bias {
                        grads.by_layer[id].push(gb);
                    }
                    let gin = g.input.reshape(x.shape())?;
                    push_to(self.layers[id].inputs[0], gin, &mut gouts)?;
                }
                (LayerKind::Add, _) => {
                    push_to(self.layers[id].inputs[0], go.clone(), &mut gouts)?;
                    push_to(self.layers[id].inputs[1], go, &mut gouts)?;
                }
                _ => return Err(Error::InvalidConfig("layer kind/params mismatch".into())),
            }
        }
        Ok(grads)
    }
}
