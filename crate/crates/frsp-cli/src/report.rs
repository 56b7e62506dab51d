//! CSV emission with stable column orders, plus the percent-drop report.
//!
//! Wall-clock values are isolated in their own trailing columns so that
//! byte-comparison of two runs can simply strip them.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use frsp_core::cost::{effort_factor, CostReport};
use frsp_core::scoring::GlobalScoreTable;
use frsp_core::trainer::{EpochRecord, PruneEvent};

fn write_file(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, content).with_context(|| format!("writing {}", path.display()))
}

pub fn history_csv(records: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,lr,train_loss,test_acc,params,flops,event,seconds\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.epoch,
            r.lr,
            r.train_loss,
            r.test_acc,
            r.params,
            r.flops,
            r.event as u8,
            r.seconds
        );
    }
    out
}

pub fn write_history(path: &Path, records: &[EpochRecord]) -> Result<()> {
    write_file(path, &history_csv(records))
}

pub fn events_csv(events: &[PruneEvent]) -> String {
    let mut out =
        String::from("epoch,victims,params_after,flops_after,skipped,search_seconds\n");
    for ev in events {
        let victims = ev
            .victims
            .iter()
            .map(|v| format!("{}:{}", v.layer, v.channel))
            .collect::<Vec<_>>()
            .join(";");
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            ev.epoch,
            victims,
            ev.params_after,
            ev.flops_after,
            ev.skipped.as_deref().unwrap_or(""),
            ev.search_seconds
        );
    }
    out
}

pub fn write_events(path: &Path, events: &[PruneEvent]) -> Result<()> {
    write_file(path, &events_csv(events))
}

pub fn effort_csv(events: &[PruneEvent]) -> Result<String> {
    let mut out =
        String::from("epoch,scoring_flops,train_forward_flops,epoch_flops,rho,search_seconds\n");
    for ev in events {
        if ev.train_forward_flops == 0 {
            continue;
        }
        let rep = effort_factor(ev.scoring_flops, ev.train_forward_flops, ev.search_seconds)?;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            ev.epoch,
            rep.scoring_flops,
            ev.train_forward_flops,
            rep.epoch_flops,
            rep.rho,
            rep.search_seconds
        );
    }
    Ok(out)
}

pub fn write_effort(path: &Path, events: &[PruneEvent]) -> Result<()> {
    write_file(path, &effort_csv(events)?)
}

pub fn scores_csv(table: &GlobalScoreTable) -> String {
    let mut out = String::from("layer_id,channel,score,criterion\n");
    for (ch, score) in &table.entries {
        let _ = writeln!(out, "{},{},{},{}", ch.layer, ch.channel, score, table.criterion);
    }
    out
}

pub fn write_scores(path: &Path, table: &GlobalScoreTable) -> Result<()> {
    write_file(path, &scores_csv(table))
}

/// Percent drop of `pruned` relative to `baseline`, in the style of the
/// comparison tables (positive = reduction).
pub fn drop_percent(baseline: u64, pruned: u64) -> f64 {
    if baseline == 0 {
        return 0.0;
    }
    100.0 * (1.0 - pruned as f64 / baseline as f64)
}

pub fn cost_drop_report(baseline: &CostReport, pruned: &CostReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "params: {} -> {} ({:.2}% drop)",
        baseline.total_params,
        pruned.total_params,
        drop_percent(baseline.total_params, pruned.total_params)
    );
    let _ = writeln!(
        out,
        "flops:  {} -> {} ({:.2}% reduction)",
        baseline.total_flops,
        pruned.total_flops,
        drop_percent(baseline.total_flops, pruned.total_flops)
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use frsp_core::graph::ChannelRef;
    use frsp_core::scoring::Criterion;

    #[test]
    fn drop_arithmetic() {
        assert_eq!(drop_percent(200, 100), 50.0);
        assert_eq!(drop_percent(100, 100), 0.0);
    }

    #[test]
    fn history_columns_are_stable() {
        let rec = EpochRecord {
            epoch: 1,
            lr: 0.1,
            train_loss: 2.0,
            test_acc: 0.5,
            params: 10,
            flops: 20,
            event: true,
            seconds: 1.5,
        };
        let csv = history_csv(&[rec]);
        assert_eq!(csv.lines().next().unwrap(), "epoch,lr,train_loss,test_acc,params,flops,event,seconds");
        assert_eq!(csv.lines().nth(1).unwrap(), "1,0.1,2,0.5,10,20,1,1.5");
    }

    #[test]
    fn scores_csv_shape() {
        let t = GlobalScoreTable {
            criterion: Criterion::L1,
            entries: vec![(ChannelRef { layer: 0, channel: 2 }, 1.5)],
        };
        assert_eq!(scores_csv(&t), "layer_id,channel,score,criterion\n0,2,1.5,l1\n");
    }
}
