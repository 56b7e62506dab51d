//! Prune-event and learning-rate schedules.
//!
//! Epochs are 1-based throughout: a prune event fires after epoch `e` when
//! `e % n == 0` and `e < N1` (strict), giving `k = N1 / n` planned events at
//! epochs `n, 2n, ..., k*n` intersected with `[1, N1)`.

use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PruneSchedule {
    /// Total training epochs.
    pub total_epochs: usize,
    /// Pruning stops at this epoch (exclusive); epochs in `[n1, N]` only train.
    pub n1: usize,
    /// Epochs between prune events.
    pub every: usize,
    /// Channels removed per event.
    pub per_event: usize,
}

impl PruneSchedule {
    pub fn new(total_epochs: usize, n1: usize, every: usize, per_event: usize) -> Result<Self> {
        if every == 0 {
            return Err(Error::InvalidConfig("prune interval n must be >= 1".into()));
        }
        if n1 > total_epochs {
            return Err(Error::InvalidConfig(alloc::format!(
                "N1 ({n1}) must not exceed N ({total_epochs})"
            )));
        }
        Ok(PruneSchedule { total_epochs, n1, every, per_event })
    }

    /// k = int(N1 / n): the planned number of prune events. The last planned
    /// epoch `k*n` is dropped when it collides with N1 (strict inequality).
    pub fn planned_events(&self) -> usize {
        self.event_epochs().len()
    }

    /// Epochs at which a prune event fires, ascending.
    pub fn event_epochs(&self) -> Vec<usize> {
        let k = self.n1 / self.every;
        (1..=k).map(|i| i * self.every).filter(|&e| e < self.n1).collect()
    }

    /// Total channels scheduled for removal over the whole run.
    pub fn planned_removals(&self) -> usize {
        self.planned_events() * self.per_event
    }
}

/// Algorithm 2's gate: prune after epoch `e` iff `e % n == 0 && e < N1`.
pub fn should_prune(epoch: usize, schedule: &PruneSchedule) -> bool {
    epoch % schedule.every == 0 && epoch < schedule.n1
}

/// Step-decay learning rate: divided by `divisor` at each milestone epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct LrSchedule {
    pub initial: f32,
    /// `(epoch, divisor)` pairs; from that epoch on the rate is divided.
    pub milestones: Vec<(usize, f32)>,
}

impl LrSchedule {
    pub fn new(initial: f32, milestones: Vec<(usize, f32)>) -> Result<Self> {
        if !(initial > 0.0) {
            return Err(Error::InvalidConfig("initial lr must be positive".into()));
        }
        for w in milestones.windows(2) {
            if w[0].0 >= w[1].0 {
                return Err(Error::InvalidConfig(
                    "lr milestones must be strictly increasing".into(),
                ));
            }
        }
        if milestones.iter().any(|&(_, d)| !(d > 0.0)) {
            return Err(Error::InvalidConfig("lr divisors must be positive".into()));
        }
        Ok(LrSchedule { initial, milestones })
    }

    /// Learning rate in effect during the given (1-based) epoch.
    pub fn rate_at(&self, epoch: usize) -> f32 {
        let mut lr = self.initial;
        for &(at, div) in &self.milestones {
            if epoch >= at {
                lr /= div;
            }
        }
        lr
    }
}
