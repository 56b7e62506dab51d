//! Run configuration: a small INI-style file with line-precise errors.
//!
//! Grammar: `key = value` pairs, optionally grouped under `[section]`
//! headers; `#` starts a comment; blank lines ignored. Sections are
//! `[architecture]`, `[dataset]`, `[optimizer]` and `[prune]`; `seed` and
//! `output` live at top level. Omitted optimizer keys fall back to the
//! standard CIFAR recipe (lr 0.1 divided by 10 at epochs 100 and 150,
//! momentum 0.9, weight decay 5e-4, batch 256, 200 epochs); an absent or
//! empty prune block disables pruning (x = 0).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use frsp_core::dataset::Augment;
use frsp_core::graph::{ArchConfig, Family};
use frsp_core::lrp::LrpConfig;
use frsp_core::schedule::{LrSchedule, PruneSchedule};
use frsp_core::scoring::{Criterion, ScoringConfig, WeightMode};
use frsp_core::trainer::TrainerConfig;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DataFormat {
    Idx,
    CifarBinary,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub format: DataFormat,
    /// Directory or file prefix for file-backed formats.
    pub path: Option<PathBuf>,
    /// Generator seed for the synthetic format.
    pub gen_seed: u64,
    pub train_samples: usize,
    pub test_samples: usize,
    /// White-noise amplitude of the synthetic generator.
    pub noise: f32,
    /// Per-channel normalization constants.
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
    pub augment: Augment,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub arch: ArchConfig,
    pub dataset: DatasetConfig,
    pub trainer: TrainerConfig,
    pub output: PathBuf,
}

struct Entry {
    line: usize,
    value: String,
    used: std::cell::Cell<bool>,
}

struct Section {
    entries: BTreeMap<String, Entry>,
}

impl Section {
    fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| {
            e.used.set(true);
            e.value.as_str()
        })
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some(e) => {
                e.used.set(true);
                e.value.parse::<T>().map(Some).map_err(|err| {
                    anyhow!("line {}: key '{key}': {err}", e.line)
                })
            }
        }
    }

    fn require<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.parse(key)?
            .ok_or_else(|| anyhow!("missing required key '{key}' in [{section}]"))
    }
}

fn split_sections(text: &str) -> Result<BTreeMap<String, Section>> {
    let mut sections: BTreeMap<String, Section> = BTreeMap::new();
    sections.insert(String::new(), Section { entries: BTreeMap::new() });
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let stripped = raw.split('#').next().unwrap_or("").trim();
        if stripped.is_empty() {
            continue;
        }
        if let Some(name) = stripped.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| anyhow!("line {line}: unterminated section header"))?
                .trim()
                .to_string();
            sections.entry(name.clone()).or_insert(Section { entries: BTreeMap::new() });
            current = name;
            continue;
        }
        let (key, value) = stripped
            .split_once('=')
            .ok_or_else(|| anyhow!("line {line}: expected 'key = value'"))?;
        let key = key.trim().to_string();
        let entry = Entry {
            line,
            value: value.trim().to_string(),
            used: std::cell::Cell::new(false),
        };
        let section = sections.get_mut(&current).expect("current section exists");
        if section.entries.insert(key.clone(), entry).is_some() {
            bail!("line {line}: duplicate key '{key}'");
        }
    }
    Ok(sections)
}

fn parse_triplet(s: &str) -> Result<(usize, usize, usize)> {
    let parts: Vec<&str> = s.split('x').collect();
    if parts.len() != 3 {
        bail!("expected CxHxW (e.g. 3x32x32), got '{s}'");
    }
    Ok((parts[0].trim().parse()?, parts[1].trim().parse()?, parts[2].trim().parse()?))
}

fn parse_f32_list(s: &str) -> Result<Vec<f32>> {
    s.split(',').map(|p| Ok(p.trim().parse::<f32>()?)).collect()
}

fn parse_usize_list(s: &str) -> Result<Vec<usize>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(|p| Ok(p.trim().parse::<usize>()?)).collect()
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let sections = split_sections(text)?;
    let empty = Section { entries: BTreeMap::new() };
    let top = sections.get("").unwrap_or(&empty);
    let arch_s = sections.get("architecture").ok_or_else(|| anyhow!("missing [architecture] section"))?;
    let data_s = sections.get("dataset").ok_or_else(|| anyhow!("missing [dataset] section"))?;
    let opt_s = sections.get("optimizer").unwrap_or(&empty);
    let prune_s = sections.get("prune").unwrap_or(&empty);

    // architecture
    let family_str: String = arch_s.require("architecture", "family")?;
    let family = Family::parse(&family_str).map_err(|e| anyhow!("key 'family': {e}"))?;
    let depth: usize = arch_s.require("architecture", "depth")?;
    let input = parse_triplet(&arch_s.require::<String>("architecture", "input")?)
        .context("key 'input'")?;
    let classes: usize = arch_s.require("architecture", "classes")?;
    let arch = ArchConfig { family, depth, input, classes };

    // dataset
    let format = match data_s.get("format") {
        Some("idx") => DataFormat::Idx,
        Some("cifar-binary") => DataFormat::CifarBinary,
        Some("synthetic") | None => DataFormat::Synthetic,
        Some(other) => bail!("key 'format': unknown dataset format '{other}'"),
    };
    let path = data_s.get("path").map(PathBuf::from);
    if matches!(format, DataFormat::Idx | DataFormat::CifarBinary) && path.is_none() {
        bail!("dataset format requires a 'path' key");
    }
    let mean = match data_s.get("mean") {
        Some(s) => parse_f32_list(s).context("key 'mean'")?,
        None => vec![0.0; input.0],
    };
    let std = match data_s.get("std") {
        Some(s) => parse_f32_list(s).context("key 'std'")?,
        None => vec![1.0; input.0],
    };
    if mean.len() != input.0 || std.len() != input.0 {
        bail!("mean/std must have one entry per input channel ({} channels)", input.0);
    }
    if std.iter().any(|&s| s == 0.0) {
        bail!("key 'std': zero entries are not allowed");
    }
    let dataset = DatasetConfig {
        format,
        path,
        gen_seed: data_s.parse("gen_seed")?.unwrap_or(0),
        train_samples: data_s.parse("train_samples")?.unwrap_or(10_000),
        test_samples: data_s.parse("test_samples")?.unwrap_or(2_000),
        noise: data_s.parse("noise")?.unwrap_or(0.9),
        mean,
        std,
        augment: Augment {
            crop_pad: data_s.parse("crop_pad")?.unwrap_or(0),
            hflip: data_s.parse("hflip")?.unwrap_or(false),
        },
    };

    // optimizer (CIFAR-style defaults when omitted)
    let lr0: f32 = opt_s.parse("lr")?.unwrap_or(0.1);
    let milestones = match opt_s.get("milestones") {
        Some(s) => parse_usize_list(s).context("key 'milestones'")?,
        None => vec![100, 150],
    };
    let divisor: f32 = opt_s.parse("lr_divisor")?.unwrap_or(10.0);
    let lr = LrSchedule::new(lr0, milestones.into_iter().map(|e| (e, divisor)).collect())
        .map_err(|e| anyhow!("[optimizer]: {e}"))?;
    let epochs: usize = opt_s.parse("epochs")?.unwrap_or(200);
    let momentum: f32 = opt_s.parse("momentum")?.unwrap_or(0.9);
    let weight_decay: f32 = opt_s.parse("weight_decay")?.unwrap_or(5e-4);
    let batch_size: usize = opt_s.parse("batch_size")?.unwrap_or(256);
    if batch_size == 0 {
        bail!("key 'batch_size': must be >= 1");
    }

    // prune (absent block = no pruning)
    let n1: usize = prune_s.parse("n1")?.unwrap_or(150.min(epochs));
    let every: usize = prune_s.parse("every")?.unwrap_or(20);
    let per_event: usize = prune_s.parse("per_event")?.unwrap_or(0);
    if n1 > epochs {
        bail!("key 'n1': N1 ({n1}) must not exceed epochs ({epochs})");
    }
    let schedule = PruneSchedule::new(epochs, n1, every, per_event)
        .map_err(|e| anyhow!("[prune]: {e}"))?;
    let criterion = match prune_s.get("criterion") {
        Some(s) => Criterion::parse(s).map_err(|e| anyhow!("key 'criterion': {e}"))?,
        None => Criterion::FeatureRelevance,
    };
    let alpha: f32 = prune_s.parse("alpha")?.unwrap_or(2.0);
    let beta: f32 = prune_s.parse("beta")?.unwrap_or(1.0);
    let lrp = LrpConfig::new(alpha, beta).map_err(|e| anyhow!("key 'alpha'/'beta': {e}"))?;
    let weight_mode = match prune_s.get("weighting") {
        Some("accuracy") | None => WeightMode::Accuracy,
        Some("uniform") => WeightMode::Uniform,
        Some(other) => bail!("key 'weighting': expected accuracy | uniform, got '{other}'"),
    };
    let rank_abs = match prune_s.get("ranking") {
        Some("signed") | None => false,
        Some("abs") => true,
        Some(other) => bail!("key 'ranking': expected signed | abs, got '{other}'"),
    };
    let scoring_subset = match prune_s.parse::<usize>("scoring_subset")? {
        None | Some(0) => None,
        Some(s) => Some(s),
    };

    let trainer = TrainerConfig {
        schedule,
        lr,
        momentum,
        weight_decay,
        batch_size,
        augment: dataset.augment,
        criterion,
        scoring: ScoringConfig { lrp, weight_mode, batch_size: batch_size.min(64), rank_abs },
        scoring_subset,
        seed: top.parse("seed")?.unwrap_or(0),
    };

    let output = PathBuf::from(top.get("output").unwrap_or("runs/out"));

    // every key must have been consumed: unknown keys are hard errors
    let mut unknown = String::new();
    for (name, section) in &sections {
        for (key, entry) in &section.entries {
            if !entry.used.get() {
                let _ = write!(unknown, "line {}: unknown key '{key}'", entry.line);
                if !name.is_empty() {
                    let _ = write!(unknown, " in [{name}]");
                }
                unknown.push('\n');
            }
        }
    }
    if !unknown.is_empty() {
        bail!("{}", unknown.trim_end());
    }

    Ok(RunConfig { arch, dataset, trainer, output })
}

pub fn load_config(path: &std::path::Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config file {}", path.display()))?;
    parse_config(&text).with_context(|| format!("in config file {}", path.display()))
}
