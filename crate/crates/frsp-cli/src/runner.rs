//! Subcommand implementations: wiring configs, datasets, the training engine
//! and file outputs together.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use frsp_core::cost;
use frsp_core::dataset::Dataset;
use frsp_core::graph::{build_model, ModelGraph, OptimState};
use frsp_core::scoring::{score_model, Criterion};
use frsp_core::trainer::{
    self, Clock, EpochRecord, PruneEvent, TrainObserver, TrainerConfig,
};
use frsp_core::Rng;
use rand::SeedableRng;

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::config::{load_config, RunConfig};
use crate::data_io::load_dataset;
use crate::report;

struct WallClock {
    start: Instant,
}

impl Clock for WallClock {
    fn seconds(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }
}

/// Streams progress to stderr and checkpoints at every prune event.
struct RunWriter {
    out_dir: PathBuf,
    quiet: bool,
}

impl TrainObserver for RunWriter {
    fn on_epoch(&mut self, r: &EpochRecord) {
        if !self.quiet {
            eprintln!(
                "epoch {:>3}  lr {:<8} loss {:<9.5} test_acc {:.4}  params {}{}",
                r.epoch,
                r.lr,
                r.train_loss,
                r.test_acc,
                r.params,
                if r.event { "  [prune]" } else { "" }
            );
        }
    }

    fn on_prune_event(
        &mut self,
        ev: &PruneEvent,
        model: &ModelGraph,
        optim: &OptimState,
        rng: &Rng,
    ) {
        let path = self.out_dir.join(format!("event_epoch{:03}.frsp", ev.epoch));
        if let Err(e) = save_checkpoint(model, optim, ev.epoch as u64, rng, &path) {
            eprintln!("warning: checkpoint at epoch {} failed: {e:#}", ev.epoch);
        }
        if let Some(reason) = &ev.skipped {
            eprintln!("warning: prune event at epoch {} skipped: {reason}", ev.epoch);
        }
    }
}

fn load_all(config_path: &Path) -> Result<(RunConfig, Dataset, Dataset)> {
    let cfg = load_config(config_path)?;
    let (train, test) = load_dataset(&cfg.dataset, cfg.arch.input, cfg.arch.classes)?;
    Ok((cfg, train, test))
}

pub fn train(config_path: &Path, seed: Option<u64>, output: Option<PathBuf>) -> Result<()> {
    let (mut cfg, train_set, test_set) = load_all(config_path)?;
    if let Some(s) = seed {
        cfg.trainer.seed = s;
    }
    if let Some(o) = output {
        cfg.output = o;
    }
    std::fs::create_dir_all(&cfg.output)
        .with_context(|| format!("creating {}", cfg.output.display()))?;

    let model = build_model(&cfg.arch, cfg.trainer.seed)?;
    let clock = WallClock { start: Instant::now() };
    let mut writer = RunWriter { out_dir: cfg.output.clone(), quiet: false };
    let out = trainer::run(model, &train_set, &test_set, &cfg.trainer, &clock, &mut writer)?;

    report::write_history(&cfg.output.join("history.csv"), &out.history)?;
    report::write_events(&cfg.output.join("events.csv"), &out.events)?;
    report::write_effort(&cfg.output.join("effort.csv"), &out.events)?;
    save_checkpoint(
        &out.model,
        &out.optim,
        cfg.trainer.schedule.total_epochs as u64,
        &out.rng,
        &cfg.output.join("final.frsp"),
    )?;

    let last = out.history.last().expect("at least one epoch");
    println!(
        "done: {} epochs, {} prune events, final test_acc {:.4}, params {}, flops {}",
        last.epoch,
        out.events.iter().filter(|e| e.skipped.is_none()).count(),
        last.test_acc,
        last.params,
        last.flops
    );
    Ok(())
}

pub fn score(
    config_path: &Path,
    ckpt: Option<&Path>,
    criterion: Option<Criterion>,
    out: Option<&Path>,
) -> Result<()> {
    let (cfg, train_set, _) = load_all(config_path)?;
    let model = match ckpt {
        Some(p) => {
            let (model, _, _) = load_checkpoint(p)?;
            check_arch(&cfg, &model)?;
            model
        }
        None => build_model(&cfg.arch, cfg.trainer.seed)?,
    };
    let criterion = criterion.unwrap_or(cfg.trainer.criterion);
    let mut rng = Rng::seed_from_u64(cfg.trainer.seed);
    let scoring_set = match cfg.trainer.scoring_subset {
        Some(s) if s < train_set.len() => train_set.random_subset(s, &mut rng)?,
        _ => train_set,
    };
    let outcome = score_model(&model, &scoring_set, criterion, &cfg.trainer.scoring, &mut rng)?;
    match out {
        Some(path) => report::write_scores(path, &outcome.table)?,
        None => print!("{}", report::scores_csv(&outcome.table)),
    }
    Ok(())
}

pub fn eval(config_path: &Path, ckpt: &Path) -> Result<()> {
    let (cfg, _, test_set) = load_all(config_path)?;
    let (model, _, state) = load_checkpoint(ckpt)?;
    check_arch(&cfg, &model)?;
    let (overall, per_class) = trainer::evaluate(&model, &test_set, cfg.trainer.batch_size)?;
    println!("checkpoint epoch {} (lr {})", state.epoch, state.hyper.lr);
    println!("test_acc {overall:.4}");
    for (p, acc) in per_class.iter().enumerate() {
        println!("class {p}: {acc:.4}");
    }
    Ok(())
}

pub fn report(
    config_path: &Path,
    baseline: &Path,
    pruned: &Path,
    effort: Option<&Path>,
) -> Result<()> {
    let cfg = load_config(config_path)?;
    let (base_model, _, _) = load_checkpoint(baseline)?;
    let (pruned_model, _, _) = load_checkpoint(pruned)?;
    check_arch(&cfg, &base_model)?;
    check_arch(&cfg, &pruned_model)?;
    let base_cost = cost::cost_report(&base_model)?;
    let pruned_cost = cost::cost_report(&pruned_model)?;
    print!("{}", report::cost_drop_report(&base_cost, &pruned_cost));
    if let Some(path) = effort {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        let mut rhos = Vec::new();
        let mut seconds = 0.0f64;
        for line in text.lines().skip(1) {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() == 6 {
                rhos.push(cols[4].parse::<f64>().context("rho column")?);
                seconds += cols[5].parse::<f64>().context("seconds column")?;
            }
        }
        if rhos.is_empty() {
            bail!("{}: no effort rows", path.display());
        }
        let mean = rhos.iter().sum::<f64>() / rhos.len() as f64;
        println!("effort: mean rho {mean:.4} over {} events, search time {seconds:.2}s", rhos.len());
    }
    Ok(())
}

pub fn compare(config_path: &Path, seeds: &[u64], output: Option<PathBuf>) -> Result<()> {
    let (mut cfg, train_set, test_set) = load_all(config_path)?;
    if let Some(o) = output {
        cfg.output = o;
    }
    std::fs::create_dir_all(&cfg.output)?;
    let seeds: Vec<u64> = if seeds.is_empty() { vec![cfg.trainer.seed] } else { seeds.to_vec() };

    let mut csv = String::from("criterion,seed,final_acc,params,flops,events\n");
    let criteria = [
        None, // unpruned baseline
        Some(Criterion::FeatureRelevance),
        Some(Criterion::L1),
        Some(Criterion::L2),
        Some(Criterion::Random),
    ];
    for &seed in &seeds {
        for criterion in criteria {
            let (label, outcome) =
                run_variant(&cfg.trainer, &cfg.arch, &train_set, &test_set, criterion, seed)?;
            let last = outcome.history.last().expect("history");
            let row = format!(
                "{},{},{},{},{},{}\n",
                label,
                seed,
                last.test_acc,
                last.params,
                last.flops,
                outcome.events.iter().filter(|e| e.skipped.is_none()).count()
            );
            eprint!("{row}");
            csv.push_str(&row);
        }
    }
    let path = cfg.output.join("compare.csv");
    std::fs::write(&path, &csv).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run_variant(
    base: &TrainerConfig,
    arch: &frsp_core::graph::ArchConfig,
    train_set: &Dataset,
    test_set: &Dataset,
    criterion: Option<Criterion>,
    seed: u64,
) -> Result<(&'static str, trainer::TrainOutcome)> {
    let mut cfg = base.clone();
    cfg.seed = seed;
    let label = match criterion {
        Some(c) => {
            cfg.criterion = c;
            c.name()
        }
        None => {
            cfg.schedule.per_event = 0;
            "baseline"
        }
    };
    let model = build_model(arch, seed)?;
    let clock = WallClock { start: Instant::now() };
    let mut quiet = RunWriterQuiet;
    let outcome = trainer::run(model, train_set, test_set, &cfg, &clock, &mut quiet)?;
    Ok((label, outcome))
}

struct RunWriterQuiet;

impl TrainObserver for RunWriterQuiet {}

fn check_arch(cfg: &RunConfig, model: &ModelGraph) -> Result<()> {
    if model.input_shape != cfg.arch.input || model.classes != cfg.arch.classes {
        return Err(anyhow!(
            "checkpoint architecture ({:?} cl {}) does not match config ({:?} cl {})",
            model.input_shape,
            model.classes,
            cfg.arch.input,
            cfg.arch.classes
        ));
    }
    Ok(())
}
