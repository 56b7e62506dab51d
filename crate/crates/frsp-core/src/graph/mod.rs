//! Architecture description and execution: a DAG of layers over the fixed
//! layer set (conv, bn, relu, maxpool, gap, linear, add), with forward
//! execution, backprop, channel-dependency analysis, and channel-removal
//! surgery.

mod build;
mod forward;
mod optim;
mod surgery;

pub use build::{build_model, ArchConfig, Family, GraphBuilder};
pub use forward::{ActivationTrace, Gradients, Mode};
pub use optim::OptimState;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::kernels::BnParams;
use crate::tensor::Tensor;

/// Pseudo layer id standing for the network input.
pub const INPUT: usize = usize::MAX;

#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    Conv { cin: usize, cout: usize, k: usize, stride: usize, pad: usize, bias: bool },
    Bn { channels: usize },
    Relu,
    Maxpool,
    Gap,
    Linear { in_features: usize, out_features: usize, bias: bool },
    Add,
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Conv { .. } => "conv",
            LayerKind::Bn { .. } => "bn",
            LayerKind::Relu => "relu",
            LayerKind::Maxpool => "maxpool",
            LayerKind::Gap => "gap",
            LayerKind::Linear { .. } => "linear",
            LayerKind::Add => "add",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub id: usize,
    pub kind: LayerKind,
    /// Producing layer ids ([`INPUT`] for the network input).
    pub inputs: Vec<usize>,
}

/// Trainable state attached to a layer.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams {
    Conv { weight: Tensor, bias: Option<Tensor> },
    Bn(BnParams),
    Linear { weight: Tensor, bias: Option<Tensor> },
    None,
}

impl LayerParams {
    /// Trainable tensors in canonical order (weight/gamma first, then
    /// bias/beta). The optimizer state mirrors this layout.
    pub fn trainable(&self) -> Vec<&Tensor> {
        match self {
            LayerParams::Conv { weight, bias } | LayerParams::Linear { weight, bias } => {
                let mut v = vec![weight];
                if let Some(b) = bias {
                    v.push(b);
                }
                v
            }
            LayerParams::Bn(bn) => vec![&bn.gamma, &bn.beta],
            LayerParams::None => Vec::new(),
        }
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            LayerParams::Conv { weight, bias } | LayerParams::Linear { weight, bias } => {
                let mut v = vec![weight];
                if let Some(b) = bias {
                    v.push(b);
                }
                v
            }
            LayerParams::Bn(bn) => vec![&mut bn.gamma, &mut bn.beta],
            LayerParams::None => Vec::new(),
        }
    }
}

/// Reference to one output channel of a convolutional layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct ChannelRef {
    pub layer: usize,
    pub channel: usize,
}

/// How a consumer layer depends on one producer conv's output channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Consumer {
    /// Conv taking the channel as part of its input slice (weight dim 1).
    ConvInput { layer: usize },
    /// Batch statistics layer tracking the channel.
    BnChannel { layer: usize },
    /// Linear layer consuming `spatial` contiguous input features per channel.
    LinearSlice { layer: usize, spatial: usize },
    /// The channel reaches an `add` junction (its producer is not eligible).
    AddJunction { layer: usize },
}

/// Ordered layer list plus parameter tensors; the object surgery mutates.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    pub layers: Vec<LayerSpec>,
    pub params: Vec<LayerParams>,
    /// `(C, H, W)` of one input sample.
    pub input_shape: (usize, usize, usize),
    pub classes: usize,
    /// Free-form architecture tag (family/depth), echoed into checkpoints.
    pub family: String,
}

impl ModelGraph {
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Output layer id (validated to be the single terminal linear layer).
    pub fn output_layer(&self) -> usize {
        self.layers.len() - 1
    }

    /// Per-layer output shapes for a batch of `batch` samples, by static
    /// shape inference (no forward pass).
    pub fn infer_shapes(&self, batch: usize) -> Result<Vec<Vec<usize>>> {
        let (c, h, w) = self.input_shape;
        let input_shape = vec![batch, c, h, w];
        let mut shapes: Vec<Vec<usize>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let in_shape = |i: usize| -> &Vec<usize> {
                if layer.inputs[i] == INPUT {
                    &input_shape
                } else {
                    &shapes[layer.inputs[i]]
                }
            };
            let shape = match &layer.kind {
                LayerKind::Conv { cin, cout, k, stride, pad, .. } => {
                    let s = in_shape(0);
                    if s.len() != 4 || s[1] != *cin {
                        return Err(Error::ShapeMismatch {
                            op: "infer_shapes(conv)",
                            expected: vec![*cin],
                            got: s.clone(),
                        });
                    }
                    let ho = crate::kernels::conv_out_dim(s[2], *k, *stride, *pad);
                    let wo = crate::kernels::conv_out_dim(s[3], *k, *stride, *pad);
                    vec![batch, *cout, ho, wo]
                }
                LayerKind::Bn { channels } => {
                    let s = in_shape(0);
                    if s.len() != 4 || s[1] != *channels {
                        return Err(Error::ShapeMismatch {
                            op: "infer_shapes(bn)",
                            expected: vec![*channels],
                            got: s.clone(),
                        });
                    }
                    s.clone()
                }
                LayerKind::Relu => in_shape(0).clone(),
                LayerKind::Maxpool => {
                    let s = in_shape(0);
                    vec![s[0], s[1], s[2] / 2, s[3] / 2]
                }
                LayerKind::Gap => {
                    let s = in_shape(0);
                    vec![s[0], s[1]]
                }
                LayerKind::Linear { in_features, out_features, .. } => {
                    let s = in_shape(0);
                    let feats: usize = s[1..].iter().product();
                    if feats != *in_features {
                        return Err(Error::ShapeMismatch {
                            op: "infer_shapes(linear)",
                            expected: vec![*in_features],
                            got: s.clone(),
                        });
                    }
                    vec![batch, *out_features]
                }
                LayerKind::Add => {
                    let a = in_shape(0).clone();
                    let b = in_shape(1);
                    if &a != b {
                        return Err(Error::ShapeMismatch {
                            op: "infer_shapes(add)",
                            expected: a,
                            got: b.clone(),
                        });
                    }
                    a
                }
            };
            shapes.push(shape);
        }
        Ok(shapes)
    }

    /// Consumer layers of `id`'s outputs.
    pub fn consumers_of(&self, id: usize) -> Vec<usize> {
        self.layers
            .iter()
            .filter(|l| l.inputs.contains(&id))
            .map(|l| l.id)
            .collect()
    }

    /// Structural validation of the graph invariants.
    pub fn validate(&self) -> Result<()> {
        if self.layers.len() != self.params.len() {
            return Err(Error::InvalidConfig("layers/params length mismatch".into()));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.id != i {
                return Err(Error::InvalidConfig("layer ids must be dense and ordered".into()));
            }
            for &inp in &layer.inputs {
                if inp != INPUT && inp >= i {
                    return Err(Error::InvalidConfig("graph edges must point backwards".into()));
                }
            }
            let arity = if matches!(layer.kind, LayerKind::Add) { 2 } else { 1 };
            if layer.inputs.len() != arity {
                return Err(Error::InvalidConfig("wrong input arity".into()));
            }
        }
        match &self.layers[self.output_layer()].kind {
            LayerKind::Linear { out_features, .. } if *out_features == self.classes => {}
            _ => {
                return Err(Error::InvalidConfig(
                    "output layer must be a linear layer producing one logit per class".into(),
                ))
            }
        }
        // every non-terminal layer must feed something
        for layer in &self.layers[..self.output_layer()] {
            if self.consumers_of(layer.id).is_empty() {
                return Err(Error::InvalidConfig("dangling layer output".into()));
            }
        }
        self.infer_shapes(1)?;
        Ok(())
    }
}
