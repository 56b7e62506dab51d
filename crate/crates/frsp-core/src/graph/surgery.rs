use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use super::{ChannelRef, Consumer, LayerKind, LayerParams, ModelGraph, OptimState};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Copy `t` with `count` contiguous entries removed along `dim`, starting at
/// `start`.
fn remove_along_dim(t: &Tensor, dim: usize, start: usize, count: usize) -> Tensor {
    let shape = t.shape();
    let outer: usize = shape[..dim].iter().product();
    let mid = shape[dim];
    let inner: usize = shape[dim + 1..].iter().product();
    debug_assert!(start + count <= mid);

    let mut new_shape = shape.to_vec();
    new_shape[dim] = mid - count;
    let mut out = Vec::with_capacity(outer * (mid - count) * inner);
    let data = t.data();
    for o in 0..outer {
        let base = o * mid * inner;
        out.extend_from_slice(&data[base..base + start * inner]);
        out.extend_from_slice(&data[base + (start + count) * inner..base + mid * inner]);
    }
    Tensor::from_vec(&new_shape, out).expect("remove_along_dim size arithmetic")
}

impl ModelGraph {
    /// All layers depending on one output channel of conv `conv_id`, found by
    /// walking through channel-preserving layers (bn, relu, maxpool, gap).
    /// The returned list is deterministic (ascending layer id per wavefront).
    pub fn channel_consumers(&self, conv_id: usize) -> Vec<Consumer> {
        let shapes = self.infer_shapes(1).expect("valid model");
        let mut out = Vec::new();
        let mut queue: Vec<usize> = self.consumers_of(conv_id);
        let mut visited = vec![false; self.layers.len()];
        while let Some(id) = queue.pop() {
            if visited[id] {
                continue;
            }
            visited[id] = true;
            match self.layers[id].kind {
                LayerKind::Conv { .. } => out.push(Consumer::ConvInput { layer: id }),
                LayerKind::Bn { .. } => {
                    out.push(Consumer::BnChannel { layer: id });
                    queue.extend(self.consumers_of(id));
                }
                LayerKind::Relu | LayerKind::Maxpool | LayerKind::Gap => {
                    queue.extend(self.consumers_of(id));
                }
                LayerKind::Linear { .. } => {
                    let src = self.layers[id].inputs[0];
                    let s = &shapes[src];
                    let spatial: usize = if s.len() == 4 { s[2] * s[3] } else { 1 };
                    out.push(Consumer::LinearSlice { layer: id, spatial });
                }
                LayerKind::Add => out.push(Consumer::AddJunction { layer: id }),
            }
        }
        out.sort_by_key(|c| match *c {
            Consumer::ConvInput { layer }
            | Consumer::BnChannel { layer }
            | Consumer::LinearSlice { layer, .. }
            | Consumer::AddJunction { layer } => layer,
        });
        out
    }

    /// Whether a conv layer's output channels may be pruned. Channels that
    /// reach an `add` junction are excluded so both junction inputs keep
    /// matching channel counts; the final linear layer has no producer role.
    pub fn conv_is_eligible(&self, conv_id: usize) -> bool {
        matches!(self.layers[conv_id].kind, LayerKind::Conv { .. })
            && !self
                .channel_consumers(conv_id)
                .iter()
                .any(|c| matches!(c, Consumer::AddJunction { .. }))
    }

    /// Every prune-eligible channel, ordered by (layer id, channel index).
    pub fn eligible_channels(&self) -> Vec<ChannelRef> {
        let mut out = Vec::new();
        for layer in &self.layers {
            if let LayerKind::Conv { cout, .. } = layer.kind {
                if self.conv_is_eligible(layer.id) {
                    for channel in 0..cout {
                        out.push(ChannelRef { layer: layer.id, channel });
                    }
                }
            }
        }
        out
    }

    /// Physically remove the victim channels: the producing filter rows, the
    /// dependent bn entries, every consumer's matching input slice, and the
    /// optimizer's momentum buffers. Validation runs up front; on error the
    /// model is untouched.
    pub fn surgery_remove_channels(
        &mut self,
        victims: &[ChannelRef],
        optim: &mut OptimState,
    ) -> Result<()> {
        let mut by_layer: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for v in victims {
            by_layer.entry(v.layer).or_default().push(v.channel);
        }
        for (&layer, channels) in &mut by_layer {
            let cout = match self.layers.get(layer).map(|l| &l.kind) {
                Some(LayerKind::Conv { cout, .. }) => *cout,
                _ => return Err(Error::IneligibleChannel { layer, channel: channels[0] }),
            };
            if !self.conv_is_eligible(layer) {
                return Err(Error::IneligibleChannel { layer, channel: channels[0] });
            }
            channels.sort_unstable();
            for pair in channels.windows(2) {
                if pair[0] == pair[1] {
                    return Err(Error::IneligibleChannel { layer, channel: pair[0] });
                }
            }
            if let Some(&c) = channels.last() {
                if c >= cout {
                    return Err(Error::IneligibleChannel { layer, channel: c });
                }
            }
            if channels.len() >= cout {
                return Err(Error::LayerAnnihilation { layer });
            }
        }

        for (&layer, channels) in &by_layer {
            let consumers = self.channel_consumers(layer);
            // descending so earlier removals do not shift later indices
            for &ch in channels.iter().rev() {
                self.remove_one_channel(layer, ch, &consumers, optim)?;
            }
        }
        self.validate()
    }

    fn remove_one_channel(
        &mut self,
        layer: usize,
        ch: usize,
        consumers: &[Consumer],
        optim: &mut OptimState,
    ) -> Result<()> {
        // producer filter row and bias entry
        if let LayerParams::Conv { weight, bias } = &mut self.params[layer] {
            *weight = remove_along_dim(weight, 0, ch, 1);
            if let Some(b) = bias.as_mut() {
                *b = remove_along_dim(b, 0, ch, 1);
            }
        }
        for buf in &mut optim.buffers[layer] {
            *buf = remove_along_dim(buf, 0, ch, 1);
        }
        if let LayerKind::Conv { cout, .. } = &mut self.layers[layer].kind {
            *cout -= 1;
        }

        for consumer in consumers {
            match *consumer {
                Consumer::BnChannel { layer: id } => {
                    if let LayerParams::Bn(bn) = &mut self.params[id] {
                        bn.gamma = remove_along_dim(&bn.gamma, 0, ch, 1);
                        bn.beta = remove_along_dim(&bn.beta, 0, ch, 1);
                        bn.running_mean = remove_along_dim(&bn.running_mean, 0, ch, 1);
                        bn.running_var = remove_along_dim(&bn.running_var, 0, ch, 1);
                    }
                    for buf in &mut optim.buffers[id] {
                        *buf = remove_along_dim(buf, 0, ch, 1);
                    }
                    if let LayerKind::Bn { channels } = &mut self.layers[id].kind {
                        *channels -= 1;
                    }
                }
                Consumer::ConvInput { layer: id } => {
                    if let LayerParams::Conv { weight, .. } = &mut self.params[id] {
                        *weight = remove_along_dim(weight, 1, ch, 1);
                    }
                    // buffer 0 is the weight buffer; bias is unaffected
                    optim.buffers[id][0] = remove_along_dim(&optim.buffers[id][0], 1, ch, 1);
                    if let LayerKind::Conv { cin, .. } = &mut self.layers[id].kind {
                        *cin -= 1;
                    }
                }
                Consumer::LinearSlice { layer: id, spatial } => {
                    if let LayerParams::Linear { weight, .. } = &mut self.params[id] {
                        *weight = remove_along_dim(weight, 1, ch * spatial, spatial);
                    }
                    optim.buffers[id][0] =
                        remove_along_dim(&optim.buffers[id][0], 1, ch * spatial, spatial);
                    if let LayerKind::Linear { in_features, .. } = &mut self.layers[id].kind {
                        *in_features -= spatial;
                    }
                }
                Consumer::AddJunction { layer: id } => {
                    // validation rejects these producers up front
                    return Err(Error::IneligibleChannel { layer: id, channel: ch });
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{GraphBuilder, INPUT};
    use crate::kernels::SgdHyper;

    fn conv_chain() -> ModelGraph {
        // conv(3->8) - relu - conv(8->16) - relu - gap - linear
        let mut b = GraphBuilder::new((3, 8, 8), 4);
        let c1 = b.conv(INPUT, 8, 3, 1, 1, true);
        let r1 = b.relu(c1);
        let c2 = b.conv(r1, 16, 3, 1, 1, true);
        let r2 = b.relu(c2);
        let g = b.gap(r2);
        b.linear(g, 4, true);
        b.finish(3).unwrap()
    }

    #[test]
    fn removing_one_channel_updates_both_convs() {
        let mut m = conv_chain();
        let mut opt = OptimState::new(&m, SgdHyper::new(0.1, 0.9, 0.0));
        m.surgery_remove_channels(&[ChannelRef { layer: 0, channel: 3 }], &mut opt).unwrap();
        match &m.params[0] {
            LayerParams::Conv { weight, bias } => {
                assert_eq!(weight.shape(), [7, 3, 3, 3]);
                assert_eq!(bias.as_ref().unwrap().shape(), [7]);
            }
            _ => unreachable!(),
        }
        match &m.params[2] {
            LayerParams::Conv { weight, .. } => assert_eq!(weight.shape(), [16, 7, 3, 3]),
            _ => unreachable!(),
        }
        assert_eq!(opt.buffers[0][0].shape(), [7, 3, 3, 3]);
        assert_eq!(opt.buffers[2][0].shape(), [16, 7, 3, 3]);
    }

    #[test]
    fn empty_victim_list_is_identity() {
        let mut m = conv_chain();
        let before = m.clone();
        let mut opt = OptimState::new(&m, SgdHyper::new(0.1, 0.9, 0.0));
        m.surgery_remove_channels(&[], &mut opt).unwrap();
        assert_eq!(m, before);
    }

    #[test]
    fn annihilating_a_layer_is_rejected_and_model_untouched() {
        let mut m = conv_chain();
        let before = m.clone();
        let mut opt = OptimState::new(&m, SgdHyper::new(0.1, 0.9, 0.0));
        let victims: Vec<ChannelRef> =
            (0..8).map(|channel| ChannelRef { layer: 0, channel }).collect();
        assert!(matches!(
            m.surgery_remove_channels(&victims, &mut opt),
            Err(Error::LayerAnnihilation { layer: 0 })
        ));
        assert_eq!(m, before);
    }

    #[test]
    fn sequential_net_lists_all_conv_channels() {
        let m = conv_chain();
        let refs = m.eligible_channels();
        assert_eq!(refs.len(), 8 + 16);
        assert_eq!(refs[0], ChannelRef { layer: 0, channel: 0 });
        assert_eq!(refs[8], ChannelRef { layer: 2, channel: 0 });
    }

    #[test]
    fn residual_block_restricts_to_interior_conv() {
        // stem - [conv1 - relu - conv2] + skip add - relu - gap - linear
        let mut b = GraphBuilder::new((3, 8, 8), 2);
        let stem = b.conv(INPUT, 8, 3, 1, 1, true);
        let s_relu = b.relu(stem);
        let c1 = b.conv(s_relu, 8, 3, 1, 1, true);
        let r1 = b.relu(c1);
        let c2 = b.conv(r1, 8, 3, 1, 1, true);
        let a = b.add(c2, s_relu);
        let r = b.relu(a);
        let g = b.gap(r);
        b.linear(g, 2, true);
        let m = b.finish(0).unwrap();

        assert!(!m.conv_is_eligible(stem)); // identity path reaches the add
        assert!(m.conv_is_eligible(c1));
        assert!(!m.conv_is_eligible(c2));
        assert_eq!(m.eligible_channels().len(), 8);
    }

    #[test]
    fn single_conv_feeding_linear_is_eligible() {
        let mut b = GraphBuilder::new((1, 4, 4), 2);
        let c = b.conv(INPUT, 3, 3, 1, 1, true);
        let r = b.relu(c);
        b.linear(r, 2, true);
        let m = b.finish(0).unwrap();
        assert_eq!(m.eligible_channels().len(), 3);
    }
}
