//! Channel importance scoring and victim selection.
//!
//! The feature-relevance criterion aggregates per-sample relevance maps into
//! a per-layer class-by-channel matrix, weights each class row by the inverse
//! of its normalized training accuracy, and flattens the result into one
//! global score table over all prune-eligible channels. L1/L2 filter norms
//! and a seeded random criterion serve as baselines.

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::cost;
use crate::dataset::{batch_ranges, Dataset};
use crate::error::{Error, Result};
use crate::graph::{ChannelRef, LayerKind, LayerParams, ModelGraph};
use crate::lrp::{full_relevance_pass, LrpConfig};
use crate::tensor::Tensor;
use crate::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    FeatureRelevance,
    L1,
    L2,
    Random,
}

impl Criterion {
    pub fn parse(s: &str) -> Result<Criterion> {
        match s {
            "feature_relevance" => Ok(Criterion::FeatureRelevance),
            "l1" => Ok(Criterion::L1),
            "l2" => Ok(Criterion::L2),
            "random" => Ok(Criterion::Random),
            other => Err(Error::InvalidConfig(alloc::format!(
                "unknown criterion '{other}' (expected feature_relevance | l1 | l2 | random)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Criterion::FeatureRelevance => "feature_relevance",
            Criterion::L1 => "l1",
            Criterion::L2 => "l2",
            Criterion::Random => "random",
        }
    }
}

/// How class rows are weighted when collapsing the relevance matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMode {
    /// Inverse normalized accuracy: struggling classes count more.
    Accuracy,
    /// All classes weighted equally.
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoringConfig {
    pub lrp: LrpConfig,
    pub weight_mode: WeightMode,
    pub batch_size: usize,
    /// Rank by absolute score instead of raw signed value (ablation only).
    pub rank_abs: bool,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        ScoringConfig {
            lrp: LrpConfig::default(),
            weight_mode: WeightMode::Accuracy,
            batch_size: 64,
            rank_abs: false,
        }
    }
}

/// Mean relevance per feature map for every sample in a batched `(B, C, H, W)`
/// (or already-pooled `(B, C)`) relevance tensor; returns `(B, C)` row-major.
pub fn channel_average(relevance: &Tensor) -> Result<Vec<f32>> {
    let (b, c) = (relevance.dim(0), relevance.dim(1));
    let spatial: usize = relevance.shape()[2..].iter().product();
    if spatial == 0 {
        return Err(Error::ShapeMismatch {
            op: "channel_average",
            expected: alloc::vec![b, c],
            got: relevance.shape().to_vec(),
        });
    }
    let inv = 1.0 / spatial as f32;
    let rv = relevance.data();
    let mut out = alloc::vec![0.0f32; b * c];
    for i in 0..b * c {
        out[i] = rv[i * spatial..(i + 1) * spatial].iter().sum::<f32>() * inv;
    }
    Ok(out)
}

/// The per-layer class-by-channel relevance accumulator (FM_l).
#[derive(Debug, Clone)]
pub struct FeatureRelevanceMatrix {
    pub layer: usize,
    pub classes: usize,
    pub channels: usize,
    /// `(classes, channels)` row-major sums until normalized, then means.
    pub data: Vec<f32>,
    pub counts: Vec<u64>,
    normalized: bool,
}

impl FeatureRelevanceMatrix {
    pub fn new(layer: usize, classes: usize, channels: usize) -> Self {
        FeatureRelevanceMatrix {
            layer,
            classes,
            channels,
            data: alloc::vec![0.0; classes * channels],
            counts: alloc::vec![0; classes],
            normalized: false,
        }
    }

    /// Add one sample's per-channel relevance vector to its class row.
    pub fn accumulate(&mut self, label: usize, relevance: &[f32]) -> Result<()> {
        if label >= self.classes {
            return Err(Error::LabelOutOfRange { label, classes: self.classes });
        }
        if relevance.len() != self.channels {
            return Err(Error::ShapeMismatch {
                op: "FeatureRelevanceMatrix::accumulate",
                expected: alloc::vec![self.channels],
                got: alloc::vec![relevance.len()],
            });
        }
        let row = &mut self.data[label * self.channels..(label + 1) * self.channels];
        for (d, r) in row.iter_mut().zip(relevance) {
            *d += r;
        }
        self.counts[label] += 1;
        Ok(())
    }

    /// Divide every class row by its sample count, turning sums into means.
    pub fn normalize_rows(&mut self) -> Result<()> {
        for (p, &count) in self.counts.iter().enumerate() {
            if count == 0 {
                return Err(Error::EmptyClass { class: p });
            }
        }
        for p in 0..self.classes {
            let inv = 1.0 / self.counts[p] as f32;
            for v in &mut self.data[p * self.channels..(p + 1) * self.channels] {
                *v *= inv;
            }
        }
        self.normalized = true;
        Ok(())
    }

    pub fn row(&self, p: usize) -> &[f32] {
        &self.data[p * self.channels..(p + 1) * self.channels]
    }
}

/// Class accuracies and the weights derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassAccuracy {
    pub acc: Vec<f32>,
    /// lambda_p = acc_p / max(acc), clamped below at 0.01.
    pub lambda: Vec<f32>,
    /// v_p = 1 / lambda_p; the best class has v_p = 1.
    pub v: Vec<f32>,
    /// v = sum of v_p.
    pub v_total: f32,
}

pub fn class_weights(acc: &[f32], mode: WeightMode) -> Result<ClassAccuracy> {
    let max = acc.iter().cloned().fold(0.0f32, f32::max);
    if acc.is_empty() || !(max > 0.0) {
        return Err(Error::InvalidConfig(
            "class weighting needs at least one class with nonzero accuracy".into(),
        ));
    }
    let (lambda, v): (Vec<f32>, Vec<f32>) = match mode {
        WeightMode::Accuracy => {
            let lambda: Vec<f32> = acc.iter().map(|&a| (a / max).max(0.01)).collect();
            let v = lambda.iter().map(|&l| 1.0 / l).collect();
            (lambda, v)
        }
        WeightMode::Uniform => {
            (alloc::vec![1.0; acc.len()], alloc::vec![1.0; acc.len()])
        }
    };
    let v_total = v.iter().sum();
    Ok(ClassAccuracy { acc: acc.to_vec(), lambda, v, v_total })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScoreVector {
    pub layer: usize,
    pub scores: Vec<f32>,
}

/// FS_l = (1/v) * sum_p v_p * FM_l(p, :).
pub fn feature_scores(fm: &FeatureRelevanceMatrix, weights: &ClassAccuracy) -> Result<FeatureScoreVector> {
    if weights.v.len() != fm.classes {
        return Err(Error::ShapeMismatch {
            op: "feature_scores",
            expected: alloc::vec![fm.classes],
            got: alloc::vec![weights.v.len()],
        });
    }
    let mut scores = alloc::vec![0.0f32; fm.channels];
    for p in 0..fm.classes {
        let vp = weights.v[p];
        for (s, m) in scores.iter_mut().zip(fm.row(p)) {
            *s += vp * m;
        }
    }
    let inv = 1.0 / weights.v_total;
    for s in &mut scores {
        *s *= inv;
    }
    Ok(FeatureScoreVector { layer: fm.layer, scores })
}

/// All eligible channels with their scores under one criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalScoreTable {
    pub criterion: Criterion,
    pub entries: Vec<(ChannelRef, f32)>,
}

/// Everything a prune event needs from one scoring sweep.
#[derive(Debug, Clone)]
pub struct ScoreOutcome {
    pub table: GlobalScoreTable,
    /// Per-class training accuracy observed during the sweep (relevance
    /// criterion only; norm/random criteria never touch the data).
    pub class_acc: Option<ClassAccuracy>,
    /// Measured FLOPs of the scoring pass (forward + relevance sweep).
    pub scoring_flops: u64,
}

/// Per-class accuracy by logit argmax (first index wins ties).
pub fn classwise_accuracy(model: &ModelGraph, data: &Dataset, batch_size: usize) -> Result<Vec<f32>> {
    let mut correct = alloc::vec![0u64; data.classes()];
    let mut count = alloc::vec![0u64; data.classes()];
    for (lo, hi) in batch_ranges(data.len(), batch_size) {
        let indices: Vec<usize> = (lo..hi).collect();
        let batch = data.gather(&indices)?;
        let trace = model.forward_eval(&batch.inputs)?;
        tally(trace.logits(), &batch.labels, &mut correct, &mut count);
    }
    finalize_accuracy(&correct, &count)
}

fn tally(logits: &Tensor, labels: &[usize], correct: &mut [u64], count: &mut [u64]) {
    let c = logits.dim(1);
    for (i, &label) in labels.iter().enumerate() {
        let row = &logits.data()[i * c..(i + 1) * c];
        let mut best = 0;
        for j in 1..c {
            if row[j] > row[best] {
                best = j;
            }
        }
        count[label] += 1;
        if best == label {
            correct[label] += 1;
        }
    }
}

fn finalize_accuracy(correct: &[u64], count: &[u64]) -> Result<Vec<f32>> {
    correct
        .iter()
        .zip(count)
        .enumerate()
        .map(|(p, (&c, &n))| {
            if n == 0 {
                Err(Error::EmptyClass { class: p })
            } else {
                Ok(c as f32 / n as f32)
            }
        })
        .collect()
}

/// Score every eligible channel of the model under the chosen criterion.
///
/// The relevance criterion makes one forward + relevance sweep over the
/// scoring set, building all layers' matrices simultaneously; class-wise
/// accuracy for the weighting is read off the same forward passes. The rng
/// is consumed only by the random criterion.
pub fn score_model(
    model: &ModelGraph,
    data: &Dataset,
    criterion: Criterion,
    cfg: &ScoringConfig,
    rng: &mut Rng,
) -> Result<ScoreOutcome> {
    let eligible = model.eligible_channels();
    match criterion {
        Criterion::L1 | Criterion::L2 => {
            let entries = eligible
                .into_iter()
                .map(|ch| {
                    let w = conv_weight(model, ch.layer)?;
                    let per = w.len() / w.dim(0);
                    let row = &w.data()[ch.channel * per..(ch.channel + 1) * per];
                    let score = match criterion {
                        Criterion::L1 => row.iter().map(|v| v.abs()).sum(),
                        _ => libm::sqrtf(row.iter().map(|v| v * v).sum()),
                    };
                    Ok((ch, score))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ScoreOutcome {
                table: GlobalScoreTable { criterion, entries },
                class_acc: None,
                scoring_flops: 0,
            })
        }
        Criterion::Random => {
            let entries = eligible.into_iter().map(|ch| (ch, rng.gen::<f32>())).collect();
            Ok(ScoreOutcome {
                table: GlobalScoreTable { criterion, entries },
                class_acc: None,
                scoring_flops: 0,
            })
        }
        Criterion::FeatureRelevance => score_feature_relevance(model, data, cfg, eligible),
    }
}

fn conv_weight(model: &ModelGraph, layer: usize) -> Result<&Tensor> {
    match &model.params[layer] {
        LayerParams::Conv { weight, .. } => Ok(weight),
        _ => Err(Error::IneligibleChannel { layer, channel: 0 }),
    }
}

fn score_feature_relevance(
    model: &ModelGraph,
    data: &Dataset,
    cfg: &ScoringConfig,
    eligible: Vec<ChannelRef>,
) -> Result<ScoreOutcome> {
    if data.is_empty() {
        return Err(Error::EmptyScoringSet);
    }
    let classes = data.classes();
    let mut layers: Vec<usize> = eligible.iter().map(|ch| ch.layer).collect();
    layers.dedup();

    let channel_count = |layer: usize| match model.layers[layer].kind {
        LayerKind::Conv { cout, .. } => cout,
        _ => 0,
    };
    let mut matrices: Vec<FeatureRelevanceMatrix> = layers
        .iter()
        .map(|&l| FeatureRelevanceMatrix::new(l, classes, channel_count(l)))
        .collect();

    let per_sample_flops = cost::count_flops(model)? + cost::relevance_flops(model)?;
    let mut scoring_flops = 0u64;
    let mut correct = alloc::vec![0u64; classes];
    let mut count = alloc::vec![0u64; classes];

    for (lo, hi) in batch_ranges(data.len(), cfg.batch_size) {
        let indices: Vec<usize> = (lo..hi).collect();
        let batch = data.gather(&indices)?;
        let trace = model.forward_eval(&batch.inputs)?;
        tally(trace.logits(), &batch.labels, &mut correct, &mut count);
        let rel = full_relevance_pass(model, &trace, &batch.labels, &cfg.lrp)?;
        for fm in matrices.iter_mut() {
            let means = channel_average(&rel.per_layer[fm.layer])?;
            for (i, &label) in batch.labels.iter().enumerate() {
                fm.accumulate(label, &means[i * fm.channels..(i + 1) * fm.channels])?;
            }
        }
        scoring_flops += batch.len() as u64 * per_sample_flops;
    }

    let acc = finalize_accuracy(&correct, &count)?;
    let weights = class_weights(&acc, cfg.weight_mode)?;
    let mut entries = Vec::with_capacity(eligible.len());
    for fm in matrices.iter_mut() {
        fm.normalize_rows()?;
        let fs = feature_scores(fm, &weights)?;
        for (c, &s) in fs.scores.iter().enumerate() {
            entries.push((ChannelRef { layer: fs.layer, channel: c }, s));
        }
    }
    Ok(ScoreOutcome {
        table: GlobalScoreTable { criterion: Criterion::FeatureRelevance, entries },
        class_acc: Some(weights),
        scoring_flops,
    })
}

/// The `x` globally smallest scores by raw signed value. Ties break by
/// (layer, channel) ascending; a victim that would leave its layer empty is
/// skipped in favor of the next smallest.
pub fn select_prune_set(table: &GlobalScoreTable, x: usize) -> Result<Vec<ChannelRef>> {
    let mut order: Vec<usize> = (0..table.entries.len()).collect();
    order.sort_by(|&a, &b| {
        let (ca, sa) = &table.entries[a];
        let (cb, sb) = &table.entries[b];
        sa.partial_cmp(sb).unwrap_or(core::cmp::Ordering::Equal).then(ca.cmp(cb))
    });
    let mut remaining: alloc::collections::BTreeMap<usize, usize> = alloc::collections::BTreeMap::new();
    for (ch, _) in &table.entries {
        *remaining.entry(ch.layer).or_insert(0) += 1;
    }
    let mut victims = Vec::with_capacity(x);
    for &i in &order {
        if victims.len() == x {
            break;
        }
        let ch = table.entries[i].0;
        let left = remaining.get_mut(&ch.layer).expect("layer counted");
        if *left <= 1 {
            continue; // survivability floor: every layer keeps one channel
        }
        *left -= 1;
        victims.push(ch);
    }
    if victims.len() < x {
        return Err(Error::PruneSetTooLarge { requested: x, available: victims.len() });
    }
    Ok(victims)
}

/// Apply the absolute-value ranking ablation to a table.
pub fn abs_table(table: &GlobalScoreTable) -> GlobalScoreTable {
    GlobalScoreTable {
        criterion: table.criterion,
        entries: table.entries.iter().map(|&(c, s)| (c, s.abs())).collect(),
    }
}

impl core::fmt::Display for Criterion {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

impl core::str::FromStr for Criterion {
    type Err = String;
    fn from_str(s: &str) -> core::result::Result<Self, String> {
        Criterion::parse(s).map_err(|e| alloc::format!("{e}"))
    }
}
