use alloc::vec::Vec;

use super::{Gradients, ModelGraph};
use crate::error::{Error, Result};
use crate::kernels::{sgd_step, SgdHyper};
use crate::tensor::Tensor;

/// SGD state: one momentum buffer per trainable tensor, mirroring the model's
/// canonical parameter layout. Surgery slices these buffers in lockstep with
/// the parameters; they are never reset.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub hyper: SgdHyper,
    pub buffers: Vec<Vec<Tensor>>,
}

impl OptimState {
    pub fn new(model: &ModelGraph, hyper: SgdHyper) -> Self {
        let buffers = model
            .params
            .iter()
            .map(|p| p.trainable().iter().map(|t| Tensor::zeros(t.shape())).collect())
            .collect();
        OptimState { hyper, buffers }
    }

    /// Apply one SGD step for every trainable tensor in the model.
    pub fn step(&mut self, model: &mut ModelGraph, grads: &Gradients) -> Result<()> {
        if grads.by_layer.len() != model.params.len() {
            return Err(Error::InvalidConfig("gradient layout does not match model".into()));
        }
        for (id, params) in model.params.iter_mut().enumerate() {
            let tensors = params.trainable_mut();
            if tensors.is_empty() {
                continue;
            }
            let layer_grads = &grads.by_layer[id];
            let layer_bufs = &mut self.buffers[id];
            if tensors.len() != layer_grads.len() || tensors.len() != layer_bufs.len() {
                return Err(Error::InvalidConfig("gradient layout does not match model".into()));
            }
            for ((param, grad), buf) in tensors.into_iter().zip(layer_grads).zip(layer_bufs) {
                sgd_step(param, grad, buf, self.hyper)?;
            }
        }
        Ok(())
    }
}
