//! Parameter and FLOP accounting.
//!
//! FLOP convention: one multiply-accumulate counts as one FLOP. A conv layer
//! contributes `Kh*Kw*Cin*Cout*Hout*Wout`, a linear layer `in*out`; pool,
//! relu, bn and add layers contribute their elementwise op counts. All
//! figures are per forward sample (batch of one) and depend only on the
//! architecture's shape, never on weight values.

use alloc::vec::Vec;

use crate::error::Result;
use crate::graph::{LayerKind, ModelGraph};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerCost {
    pub id: usize,
    pub kind: &'static str,
    pub params: u64,
    pub flops: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostReport {
    pub per_layer: Vec<LayerCost>,
    pub total_params: u64,
    pub total_flops: u64,
}

/// Exact count of trainable scalars (weights, biases, bn affine terms).
pub fn count_params(model: &ModelGraph) -> u64 {
    model.params.iter().map(|p| p.trainable().iter().map(|t| t.len() as u64).sum::<u64>()).sum()
}

fn layer_flops(model: &ModelGraph, id: usize, shapes: &[Vec<usize>]) -> u64 {
    let out_numel = |id: usize| shapes[id][1..].iter().product::<usize>() as u64;
    match &model.layers[id].kind {
        LayerKind::Conv { cin, cout, k, .. } => {
            let (hout, wout) = (shapes[id][2] as u64, shapes[id][3] as u64);
            (k * k * cin * cout) as u64 * hout * wout
        }
        LayerKind::Linear { in_features, out_features, .. } => {
            (in_features * out_features) as u64
        }
        // scale + shift per element
        LayerKind::Bn { .. } => 2 * out_numel(id),
        LayerKind::Relu => out_numel(id),
        // three comparisons per 2x2 window
        LayerKind::Maxpool => 3 * out_numel(id),
        // one add per input element of the pooled planes
        LayerKind::Gap => {
            let src = model.layers[id].inputs[0];
            out_numel(src)
        }
        LayerKind::Add => out_numel(id),
    }
}

/// FLOPs of one forward pass over a single sample.
pub fn count_flops(model: &ModelGraph) -> Result<u64> {
    Ok(cost_report(model)?.total_flops)
}

/// Per-layer and total parameter/FLOP breakdown.
pub fn cost_report(model: &ModelGraph) -> Result<CostReport> {
    let shapes = model.infer_shapes(1)?;
    let mut per_layer = Vec::with_capacity(model.num_layers());
    let (mut tp, mut tf) = (0u64, 0u64);
    for id in 0..model.num_layers() {
        let params =
            model.params[id].trainable().iter().map(|t| t.len() as u64).sum::<u64>();
        let flops = layer_flops(model, id, &shapes);
        tp += params;
        tf += flops;
        per_layer.push(LayerCost { id, kind: model.layers[id].kind.name(), params, flops });
    }
    Ok(CostReport { per_layer, total_params: tp, total_flops: tf })
}

/// FLOPs of one relevance sweep over a single sample (the backward half of a
/// scoring pass; a full scoring pass costs `count_flops + relevance_flops`).
///
/// Conventions, mirroring the lrp implementation: affine layers visit every
/// connection once for the denominator pass and twice for the scatter
/// (3 MACs per connection) plus two coefficient ops per output element;
/// gap costs 3 ops per pooled input element; maxpool routing one op per
/// output; add four ops per element; bn folding one op per channel; relu is
/// free (identity).
pub fn relevance_flops(model: &ModelGraph) -> Result<u64> {
    let shapes = model.infer_shapes(1)?;
    let out_numel = |id: usize| shapes[id][1..].iter().product::<usize>() as u64;
    let mut total = 0u64;
    for id in 0..model.num_layers() {
        total += match &model.layers[id].kind {
            LayerKind::Conv { .. } => 3 * layer_flops(model, id, &shapes) + 2 * out_numel(id),
            LayerKind::Linear { .. } => 3 * layer_flops(model, id, &shapes) + 2 * out_numel(id),
            LayerKind::Gap => {
                let src = model.layers[id].inputs[0];
                3 * out_numel(src)
            }
            LayerKind::Maxpool => out_numel(id),
            LayerKind::Add => 4 * out_numel(id),
            LayerKind::Bn { channels } => *channels as u64,
            LayerKind::Relu => 0,
        };
    }
    Ok(total)
}

/// Effort factor rho: cost of the relevance search relative to training,
/// with one training epoch taken as three forward passes over the train set.
#[derive(Debug, Clone, PartialEq)]
pub struct EffortReport {
    /// Total FLOPs of one scoring pass (forward + relevance) over the
    /// scoring set.
    pub scoring_flops: u64,
    /// 3 x forward FLOPs over the full training set.
    pub epoch_flops: u64,
    pub rho: f64,
    /// Wall-clock seconds spent in score-select-prune, measured not derived.
    pub search_seconds: f64,
}

pub fn effort_factor(
    scoring_flops: u64,
    train_forward_flops: u64,
    search_seconds: f64,
) -> Result<EffortReport> {
    if train_forward_flops == 0 {
        return Err(crate::error::Error::InvalidConfig(
            "effort factor needs a nonzero training-epoch FLOP count".into(),
        ));
    }
    let epoch_flops = 3 * train_forward_flops;
    Ok(EffortReport {
        scoring_flops,
        epoch_flops,
        rho: scoring_flops as f64 / epoch_flops as f64,
        search_seconds,
    })
}
