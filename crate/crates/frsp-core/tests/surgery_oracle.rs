//! Surgery oracle: removing a channel must be equivalent to zeroing out
//! everything that channel could ever contribute, and must change the
//! parameter count by the exact analytic delta.

use frsp_core::cost::count_params;
use frsp_core::graph::{
    ChannelRef, Consumer, GraphBuilder, LayerKind, LayerParams, ModelGraph, OptimState, INPUT,
};
use frsp_core::kernels::SgdHyper;
use frsp_core::tensor::Tensor;
use frsp_core::Rng;
use rand::{Rng as _, SeedableRng};

/// A random sequential CNN: 1-3 convs (random bias/bn/relu/maxpool mix),
/// then gap + linear.
fn random_net(rng: &mut Rng) -> ModelGraph {
    let depth = rng.gen_range(1..=3usize);
    let cin = rng.gen_range(1..=3usize);
    let classes = rng.gen_range(2..=5usize);
    let mut b = GraphBuilder::new((cin, 8, 8), classes);
    let mut prev = INPUT;
    let mut pools = 0;
    for _ in 0..depth {
        let cout = rng.gen_range(3..=8usize);
        prev = b.conv(prev, cout, 3, 1, 1, rng.gen_bool(0.5));
        if rng.gen_bool(0.7) {
            prev = b.bn(prev);
        }
        prev = b.relu(prev);
        if pools < 2 && rng.gen_bool(0.4) {
            prev = b.maxpool(prev);
            pools += 1;
        }
    }
    let g = b.gap(prev);
    b.linear(g, classes, true);
    let mut model = b.finish(rng.gen()).unwrap();

    // perturb bn running stats away from the identity so folding matters
    for p in &mut model.params {
        if let LayerParams::Bn(bn) = p {
            for v in bn.running_mean.data_mut() {
                *v = 0.1;
            }
            for v in bn.running_var.data_mut() {
                *v = 1.5;
            }
        }
    }
    model
}

/// Zero-mask oracle: keep the architecture, but null every parameter through
/// which the victim channel can contribute — its filter row and bias entry,
/// and the dependent bn channel's affine terms.
fn zero_masked(model: &ModelGraph, victim: ChannelRef) -> ModelGraph {
    let mut m = model.clone();
    if let LayerParams::Conv { weight, bias } = &mut m.params[victim.layer] {
        let (cin, kh, kw) = (weight.dim(1), weight.dim(2), weight.dim(3));
        let row = victim.channel * cin * kh * kw;
        for v in &mut weight.data_mut()[row..row + cin * kh * kw] {
            *v = 0.0;
        }
        if let Some(b) = bias.as_mut() {
            b.data_mut()[victim.channel] = 0.0;
        }
    }
    for consumer in model.channel_consumers(victim.layer) {
        if let Consumer::BnChannel { layer } = consumer {
            if let LayerParams::Bn(bn) = &mut m.params[layer] {
                bn.gamma.data_mut()[victim.channel] = 0.0;
                bn.beta.data_mut()[victim.channel] = 0.0;
            }
        }
    }
    m
}

/// Trainable scalars that disappear when the victim channel is removed.
fn analytic_delta(model: &ModelGraph, victim: ChannelRef) -> u64 {
    let mut delta = 0u64;
    if let LayerParams::Conv { weight, bias } = &model.params[victim.layer] {
        delta += (weight.dim(1) * weight.dim(2) * weight.dim(3)) as u64;
        if bias.is_some() {
            delta += 1;
        }
    }
    for consumer in model.channel_consumers(victim.layer) {
        match consumer {
            Consumer::BnChannel { .. } => delta += 2, // gamma + beta
            Consumer::ConvInput { layer } => {
                if let LayerParams::Conv { weight, .. } = &model.params[layer] {
                    delta += (weight.dim(0) * weight.dim(2) * weight.dim(3)) as u64;
                }
            }
            Consumer::LinearSlice { layer, spatial } => {
                if let LayerKind::Linear { out_features, .. } = model.layers[layer].kind {
                    delta += (out_features * spatial) as u64;
                }
            }
            Consumer::AddJunction { .. } => unreachable!("sequential net"),
        }
    }
    delta
}

#[test]
fn surgery_matches_zero_mask_oracle_and_param_delta() {
    let mut rng = Rng::seed_from_u64(0x5123);
    for case in 0..50 {
        let model = random_net(&mut rng);
        let eligible = model.eligible_channels();
        let victim = eligible[rng.gen_range(0..eligible.len())];

        let (c, h, w) = model.input_shape;
        let mut x = Tensor::zeros(&[4, c, h, w]);
        for v in x.data_mut() {
            *v = rng.gen_range(-1.0..1.0f32);
        }

        let masked_logits = zero_masked(&model, victim).forward_eval(&x).unwrap().logits().clone();
        let params_before = count_params(&model);
        let expected_delta = analytic_delta(&model, victim);

        let mut pruned = model.clone();
        let mut opt = OptimState::new(&pruned, SgdHyper::new(0.1, 0.9, 0.0));
        pruned.surgery_remove_channels(&[victim], &mut opt).unwrap();
        pruned.validate().unwrap();

        let pruned_logits = pruned.forward_eval(&x).unwrap().logits().clone();
        assert_eq!(pruned_logits.shape(), masked_logits.shape(), "case {case}");
        for (i, (p, m)) in pruned_logits.data().iter().zip(masked_logits.data()).enumerate() {
            assert!(
                (p - m).abs() <= 1e-5,
                "case {case} victim {victim:?} logit {i}: pruned {p} vs masked {m}"
            );
        }
        assert_eq!(
            count_params(&pruned),
            params_before - expected_delta,
            "case {case} victim {victim:?}: param delta"
        );
    }
}
