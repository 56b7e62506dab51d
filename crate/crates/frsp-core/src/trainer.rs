//! The gradual-pruning training loop.
//!
//! Epochs are 1-based. Each epoch runs one shuffled SGD pass; afterwards, if
//! the schedule fires (`epoch % n == 0 && epoch < N1`), the model is scored
//! on the training data, the globally least important channels are removed
//! with full optimizer surgery, and training continues on the smaller
//! network. No pruning happens in `[N1, N]`; there is no separate fine-tuning
//! stage.

use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;

use crate::cost;
use crate::dataset::{augment_batch, batch_ranges, shuffled_indices, Augment, Dataset};
use crate::error::{Error, Result};
use crate::graph::{ChannelRef, ModelGraph, Mode, OptimState};
use crate::kernels::{softmax_xent, SgdHyper};
use crate::schedule::{should_prune, LrSchedule, PruneSchedule};
use crate::scoring::{
    abs_table, score_model, select_prune_set, Criterion, ScoringConfig,
};
use crate::Rng;

/// Wall-clock source. The engine itself never reads time; hosts inject one
/// (tests can pass [`NullClock`] for fully deterministic output).
pub trait Clock {
    fn seconds(&self) -> f64;
}

/// Always reports zero; keeps engine output byte-stable in tests.
pub struct NullClock;

impl Clock for NullClock {
    fn seconds(&self) -> f64 {
        0.0
    }
}

/// Receives progress callbacks; hosts use this for CSV streaming and
/// checkpointing. All methods default to no-ops.
pub trait TrainObserver {
    fn on_epoch(&mut self, _record: &EpochRecord) {}
    fn on_prune_event(
        &mut self,
        _event: &PruneEvent,
        _model: &ModelGraph,
        _optim: &OptimState,
        _rng: &Rng,
    ) {
    }
}

/// Observer that ignores everything.
pub struct NoObserver;

impl TrainObserver for NoObserver {}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig {
    pub schedule: PruneSchedule,
    pub lr: LrSchedule,
    pub momentum: f32,
    pub weight_decay: f32,
    pub batch_size: usize,
    pub augment: Augment,
    pub criterion: Criterion,
    pub scoring: ScoringConfig,
    /// Score on a seeded random subset of this many training samples
    /// (`None` = full training set).
    pub scoring_subset: Option<usize>,
    pub seed: u64,
}

/// One line of the per-epoch history.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f32,
    pub train_loss: f32,
    pub test_acc: f32,
    pub params: u64,
    pub flops: u64,
    /// True when a prune event ran after this epoch.
    pub event: bool,
    /// Wall-clock seconds for the epoch (clock-dependent, excluded from
    /// determinism comparisons).
    pub seconds: f64,
}

/// Everything recorded at one prune event.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneEvent {
    pub epoch: usize,
    pub victims: Vec<ChannelRef>,
    /// Score table snapshot at selection time.
    pub scores: Vec<(ChannelRef, f32)>,
    pub params_after: u64,
    pub flops_after: u64,
    /// Measured FLOPs of the scoring pass (forward + relevance).
    pub scoring_flops: u64,
    /// Forward FLOPs over the full train set at scoring time (for rho).
    pub train_forward_flops: u64,
    /// Wall-clock seconds spent scoring + selecting + pruning.
    pub search_seconds: f64,
    /// Set when the event failed and was skipped (training continued).
    pub skipped: Option<String>,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: ModelGraph,
    pub optim: OptimState,
    pub rng: Rng,
    pub history: Vec<EpochRecord>,
    pub events: Vec<PruneEvent>,
}

/// One shuffled SGD pass over the training set; returns the mean batch loss.
pub fn train_epoch(
    model: &mut ModelGraph,
    optim: &mut OptimState,
    data: &Dataset,
    batch_size: usize,
    augment: Augment,
    rng: &mut Rng,
) -> Result<f32> {
    let order = shuffled_indices(data.len(), rng);
    let mut total = 0.0f64;
    let mut batches = 0u32;
    for (lo, hi) in batch_ranges(data.len(), batch_size) {
        let mut batch = data.gather(&order[lo..hi])?;
        augment_batch(&mut batch.inputs, augment, rng);
        let trace = model.forward(&batch.inputs, Mode::Train)?;
        let (loss, grad_logits) = softmax_xent(trace.logits(), &batch.labels)?;
        let grads = model.backward(&trace, &grad_logits)?;
        optim.step(model, &grads)?;
        total += f64::from(loss);
        batches += 1;
    }
    if batches == 0 {
        return Err(Error::EmptyScoringSet);
    }
    Ok((total / f64::from(batches)) as f32)
}

/// Overall and per-class accuracy by logit argmax (first index wins ties).
pub fn evaluate(model: &ModelGraph, data: &Dataset, batch_size: usize) -> Result<(f32, Vec<f32>)> {
    if data.is_empty() {
        return Err(Error::EmptyScoringSet);
    }
    let classes = data.classes();
    let mut correct = alloc::vec![0u64; classes];
    let mut count = alloc::vec![0u64; classes];
    for (lo, hi) in batch_ranges(data.len(), batch_size) {
        let indices: Vec<usize> = (lo..hi).collect();
        let batch = data.gather(&indices)?;
        let trace = model.forward_eval(&batch.inputs)?;
        let c = trace.logits().dim(1);
        for (i, &label) in batch.labels.iter().enumerate() {
            let row = &trace.logits().data()[i * c..(i + 1) * c];
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
    let overall =
        correct.iter().sum::<u64>() as f32 / count.iter().sum::<u64>().max(1) as f32;
    let per_class = correct
        .iter()
        .zip(&count)
        .enumerate()
        .map(|(p, (&c, &n))| {
            if n == 0 {
                Err(Error::EmptyClass { class: p })
            } else {
                Ok(c as f32 / n as f32)
            }
        })
        .collect::<Result<Vec<f32>>>()?;
    Ok((overall, per_class))
}

/// Run Algorithm 2 end to end.
pub fn run(
    mut model: ModelGraph,
    train: &Dataset,
    test: &Dataset,
    cfg: &TrainerConfig,
    clock: &dyn Clock,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    let mut rng = Rng::seed_from_u64(cfg.seed);
    let hyper = SgdHyper::new(cfg.lr.rate_at(1), cfg.momentum, cfg.weight_decay);
    let mut optim = OptimState::new(&model, hyper);
    let mut history = Vec::with_capacity(cfg.schedule.total_epochs);
    let mut events = Vec::new();

    for epoch in 1..=cfg.schedule.total_epochs {
        let t_epoch = clock.seconds();
        optim.hyper.lr = cfg.lr.rate_at(epoch);
        let train_loss =
            train_epoch(&mut model, &mut optim, train, cfg.batch_size, cfg.augment, &mut rng)?;

        let mut event_ran = false;
        if should_prune(epoch, &cfg.schedule) && cfg.schedule.per_event > 0 {
            let event = prune_event(&mut model, &mut optim, train, cfg, epoch, clock, &mut rng)?;
            observer.on_prune_event(&event, &model, &optim, &rng);
            event_ran = event.skipped.is_none();
            events.push(event);
        }

        let (test_acc, _) = evaluate(&model, test, cfg.batch_size)?;
        let report = cost::cost_report(&model)?;
        let record = EpochRecord {
            epoch,
            lr: optim.hyper.lr,
            train_loss,
            test_acc,
            params: report.total_params,
            flops: report.total_flops,
            event: event_ran,
            seconds: clock.seconds() - t_epoch,
        };
        observer.on_epoch(&record);
        history.push(record);
    }

    Ok(TrainOutcome { model, optim, rng, history, events })
}

/// Score, select and prune; on failure the event is recorded as skipped and
/// the model is left untouched.
fn prune_event(
    model: &mut ModelGraph,
    optim: &mut OptimState,
    train: &Dataset,
    cfg: &TrainerConfig,
    epoch: usize,
    clock: &dyn Clock,
    rng: &mut Rng,
) -> Result<PruneEvent> {
    let t0 = clock.seconds();
    let train_forward_flops = train.len() as u64 * cost::count_flops(model)?;

    let scoring_set;
    let scoring_data = match cfg.scoring_subset {
        Some(s) if s < train.len() => {
            scoring_set = train.random_subset(s, rng)?;
            &scoring_set
        }
        _ => train,
    };

    let outcome = score_model(model, scoring_data, cfg.criterion, &cfg.scoring, rng)?;
    let table =
        if cfg.scoring.rank_abs { abs_table(&outcome.table) } else { outcome.table.clone() };

    let mut event = PruneEvent {
        epoch,
        victims: Vec::new(),
        scores: outcome.table.entries.clone(),
        params_after: 0,
        flops_after: 0,
        scoring_flops: outcome.scoring_flops,
        train_forward_flops,
        search_seconds: 0.0,
        skipped: None,
    };

    let surgery = select_prune_set(&table, cfg.schedule.per_event)
        .and_then(|victims| model.surgery_remove_channels(&victims, optim).map(|_| victims));
    match surgery {
        Ok(victims) => event.victims = victims,
        Err(e) => event.skipped = Some(alloc::format!("{e}")),
    }

    let report = cost::cost_report(model)?;
    event.params_after = report.total_params;
    event.flops_after = report.total_flops;
    event.search_seconds = clock.seconds() - t0;
    Ok(event)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_model, ArchConfig, Family};
    use crate::tensor::Tensor;
    use rand::Rng as _;

    fn blob_dataset(n: usize, classes: usize, seed: u64) -> Dataset {
        // one bright pixel region per class: linearly separable
        let (c, h, w) = (1, 8, 8);
        let mut rng = Rng::seed_from_u64(seed);
        let mut x = Tensor::zeros(&[n, c, h, w]);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let label = i % classes;
            let sample = x.sample_mut(i);
            for v in sample.iter_mut() {
                *v = rng.gen::<f32>() * 0.1;
            }
            // class signature: column `label` lit up
            for y in 0..h {
                sample[y * w + label] += 1.0;
            }
            labels.push(label);
        }
        Dataset::new(x, labels, classes).unwrap()
    }

    fn toy_config(total: usize, n1: usize, every: usize, x: usize) -> TrainerConfig {
        TrainerConfig {
            schedule: PruneSchedule::new(total, n1, every, x).unwrap(),
            lr: LrSchedule::new(0.05, alloc::vec![]).unwrap(),
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 16,
            augment: Augment::NONE,
            criterion: Criterion::FeatureRelevance,
            scoring: ScoringConfig::default(),
            scoring_subset: None,
            seed: 3,
        }
    }

    fn tiny_model(seed: u64) -> ModelGraph {
        build_model(
            &ArchConfig { family: Family::Conv6, depth: 6, input: (1, 8, 8), classes: 4 },
            seed,
        )
        .unwrap()
    }

    #[test]
    fn loss_decreases_on_separable_data() {
        let mut model = tiny_model(1);
        let data = blob_dataset(64, 4, 0);
        let mut optim = OptimState::new(&model, SgdHyper::new(0.05, 0.9, 5e-4));
        let mut rng = Rng::seed_from_u64(2);
        let first =
            train_epoch(&mut model, &mut optim, &data, 16, Augment::NONE, &mut rng).unwrap();
        let mut last = first;
        for _ in 0..4 {
            last = train_epoch(&mut model, &mut optim, &data, 16, Augment::NONE, &mut rng)
                .unwrap();
        }
        assert!(last < first, "loss did not decrease: {first} -> {last}");
    }

    #[test]
    fn fixed_seed_reproduces_parameters_bitwise() {
        let data = blob_dataset(32, 4, 0);
        let run_once = || {
            let mut model = tiny_model(7);
            let mut optim = OptimState::new(&model, SgdHyper::new(0.05, 0.9, 5e-4));
            let mut rng = Rng::seed_from_u64(11);
            train_epoch(&mut model, &mut optim, &data, 8, Augment::NONE, &mut rng).unwrap();
            model
        };
        let (a, b) = (run_once(), run_once());
        for (pa, pb) in a.params.iter().zip(&b.params) {
            for (ta, tb) in pa.trainable().iter().zip(pb.trainable()) {
                assert_eq!(ta.data(), tb.data());
            }
        }
    }

    #[test]
    fn x_zero_keeps_architecture() {
        let model = tiny_model(5);
        let baseline_params = cost::count_params(&model);
        let data = blob_dataset(32, 4, 0);
        let out = run(
            model,
            &data,
            &data,
            &toy_config(4, 3, 2, 0),
            &NullClock,
            &mut NoObserver,
        )
        .unwrap();
        assert!(out.events.is_empty());
        assert_eq!(cost::count_params(&out.model), baseline_params);
    }

    #[test]
    fn events_fire_and_shrink_model() {
        let model = tiny_model(5);
        let baseline = cost::count_params(&model);
        let data = blob_dataset(48, 4, 0);
        let cfg = toy_config(5, 5, 2, 2); // events after epochs 2 and 4
        let out = run(model, &data, &data, &cfg, &NullClock, &mut NoObserver).unwrap();
        assert_eq!(out.events.len(), 2);
        assert_eq!(out.events[0].epoch, 2);
        assert_eq!(out.events[1].epoch, 4);
        assert_eq!(out.events[0].victims.len(), 2);
        assert!(cost::count_params(&out.model) < baseline);
        // params staircase: non-increasing, strictly dropping at event epochs
        for w in out.history.windows(2) {
            assert!(w[1].params <= w[0].params);
        }
        for ev in &out.events {
            let before = out.history[ev.epoch - 2].params;
            let after = out.history[ev.epoch - 1].params;
            assert!(after < before);
        }
    }

    #[test]
    fn weight_decay_only_step_shrinks_norm() {
        let mut w = Tensor::from_vec(&[2], alloc::vec![1.0, -2.0]).unwrap();
        let g = Tensor::zeros(&[2]);
        let mut v = Tensor::zeros(&[2]);
        crate::kernels::sgd_step(&mut w, &g, &mut v, SgdHyper::new(0.1, 0.0, 0.1)).unwrap();
        let norm: f32 = w.data().iter().map(|x| x * x).sum();
        assert!(norm < 5.0);
    }
}
