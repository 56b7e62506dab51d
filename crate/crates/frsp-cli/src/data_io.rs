//! Dataset loading: idx files, cifar-binary batches, and a synthetic
//! Gaussian-blob generator for self-contained runs.
//!
//! All loaders normalize per channel with the config's mean/std (applied to
//! pixel values scaled into [0, 1] for the file-backed formats).

use std::path::Path;

use anyhow::{bail, Context, Result};
use frsp_core::dataset::Dataset;
use frsp_core::tensor::Tensor;
use frsp_core::Rng;
use rand::{Rng as _, SeedableRng};

use crate::config::{DataFormat, DatasetConfig};

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
const CIFAR_RECORD: usize = 3073;

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    let slice: [u8; 4] = bytes
        .get(at..at + 4)
        .context("truncated header")?
        .try_into()
        .expect("4-byte slice");
    Ok(u32::from_be_bytes(slice))
}

fn normalize(data: &mut [f32], channels: usize, plane: usize, mean: &[f32], std: &[f32]) {
    let sample = channels * plane;
    for (i, v) in data.iter_mut().enumerate() {
        let c = (i % sample) / plane;
        *v = (*v - mean[c]) / std[c];
    }
}

/// idx image + label file pair (big-endian headers, u8 payloads). Pixels are
/// scaled to [0, 1] before normalization.
pub fn load_idx(images: &Path, labels: &Path, classes: usize, mean: &[f32], std: &[f32]) -> Result<Dataset> {
    let img = std::fs::read(images).with_context(|| format!("reading {}", images.display()))?;
    let lab = std::fs::read(labels).with_context(|| format!("reading {}", labels.display()))?;

    if be_u32(&img, 0)? != IDX_IMAGES_MAGIC {
        bail!("{}: bad idx image magic (expected 0x{IDX_IMAGES_MAGIC:08x})", images.display());
    }
    if be_u32(&lab, 0)? != IDX_LABELS_MAGIC {
        bail!("{}: bad idx label magic (expected 0x{IDX_LABELS_MAGIC:08x})", labels.display());
    }
    let n = be_u32(&img, 4)? as usize;
    let h = be_u32(&img, 8)? as usize;
    let w = be_u32(&img, 12)? as usize;
    if be_u32(&lab, 4)? as usize != n {
        bail!("idx image/label counts differ");
    }
    if img.len() != 16 + n * h * w {
        bail!("{}: truncated idx image payload", images.display());
    }
    if lab.len() != 8 + n {
        bail!("{}: truncated idx label payload", labels.display());
    }

    let mut data: Vec<f32> = img[16..].iter().map(|&b| b as f32 / 255.0).collect();
    normalize(&mut data, 1, h * w, mean, std);
    let x = Tensor::from_vec(&[n, 1, h, w], data)?;
    let y: Vec<usize> = lab[8..].iter().map(|&b| b as usize).collect();
    if let Some(&bad) = y.iter().find(|&&l| l >= classes) {
        bail!("{}: label {bad} out of range for {classes} classes", labels.display());
    }
    Ok(Dataset::new(x, y, classes)?)
}

/// cifar-binary: records of 1 label byte + 3072 pixel bytes (3x32x32,
/// channel-major). Accepts one file or a directory of *.bin batches.
pub fn load_cifar_binary(path: &Path, classes: usize, mean: &[f32], std: &[f32]) -> Result<Dataset> {
    let mut files = Vec::new();
    if path.is_dir() {
        for entry in std::fs::read_dir(path).with_context(|| format!("reading {}", path.display()))? {
            let p = entry?.path();
            if p.extension().is_some_and(|e| e == "bin") {
                files.push(p);
            }
        }
        files.sort();
        if files.is_empty() {
            bail!("{}: no .bin files found", path.display());
        }
    } else {
        files.push(path.to_path_buf());
    }

    let mut data = Vec::new();
    let mut labels = Vec::new();
    for file in &files {
        let bytes = std::fs::read(file).with_context(|| format!("reading {}", file.display()))?;
        if bytes.is_empty() || bytes.len() % CIFAR_RECORD != 0 {
            bail!("{}: size {} is not a multiple of {CIFAR_RECORD}", file.display(), bytes.len());
        }
        for record in bytes.chunks_exact(CIFAR_RECORD) {
            let label = record[0] as usize;
            if label >= classes {
                bail!("{}: label {label} out of range for {classes} classes", file.display());
            }
            labels.push(label);
            data.extend(record[1..].iter().map(|&b| b as f32 / 255.0));
        }
    }
    normalize(&mut data, 3, 32 * 32, mean, std);
    let n = labels.len();
    let x = Tensor::from_vec(&[n, 3, 32, 32], data)?;
    Ok(Dataset::new(x, labels, classes)?)
}

fn gaussian(rng: &mut Rng) -> f32 {
    // Box-Muller on two uniform draws
    let u1: f32 = rng.gen_range(f32::EPSILON..1.0);
    let u2: f32 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (core::f32::consts::TAU * u2).cos()
}

/// Synthetic Gaussian-blob classification data: each class is a fixed random
/// mixture of spatial bumps, and every sample is its class template plus
/// white noise. Train and test splits come from one generator stream so they
/// share templates but not samples.
pub fn synth_dataset(
    seed: u64,
    shape: (usize, usize, usize),
    classes: usize,
    train_samples: usize,
    test_samples: usize,
    noise: f32,
) -> Result<(Dataset, Dataset)> {
    let (c, h, w) = shape;
    let mut rng = Rng::seed_from_u64(seed ^ 0x5eed_b10b);

    // class templates: three soft bumps per class at seeded positions
    let mut templates = vec![vec![0.0f32; c * h * w]; classes];
    for template in templates.iter_mut() {
        for _ in 0..3 {
            let ch = rng.gen_range(0..c);
            let cy = rng.gen_range(0..h) as f32;
            let cx = rng.gen_range(0..w) as f32;
            let amp = 1.0 + rng.gen::<f32>();
            let radius = 1.0 + 1.5 * rng.gen::<f32>();
            for y in 0..h {
                for x in 0..w {
                    let d2 = (y as f32 - cy).powi(2) + (x as f32 - cx).powi(2);
                    template[ch * h * w + y * w + x] += amp * (-d2 / (2.0 * radius * radius)).exp();
                }
            }
        }
    }

    let mut make_split = |count: usize| -> Result<Dataset> {
        let mut x = Tensor::zeros(&[count, c, h, w]);
        let mut labels = Vec::with_capacity(count);
        for i in 0..count {
            let label = i % classes;
            let sample = x.sample_mut(i);
            for (v, t) in sample.iter_mut().zip(&templates[label]) {
                *v = t + noise * gaussian(&mut rng);
            }
            labels.push(label);
        }
        Ok(Dataset::new(x, labels, classes)?)
    };

    let train = make_split(train_samples)?;
    let test = make_split(test_samples)?;
    Ok((train, test))
}

/// Dispatch on the config's dataset block. Returns (train, test).
pub fn load_dataset(cfg: &DatasetConfig, input: (usize, usize, usize), classes: usize) -> Result<(Dataset, Dataset)> {
    match cfg.format {
        DataFormat::Synthetic => {
            synth_dataset(cfg.gen_seed, input, classes, cfg.train_samples, cfg.test_samples, cfg.noise)
        }
        DataFormat::Idx => {
            let base = cfg.path.as_ref().expect("validated by config");
            let train = load_idx(
                &base.join("train-images.idx"),
                &base.join("train-labels.idx"),
                classes,
                &cfg.mean,
                &cfg.std,
            )?;
            let test = load_idx(
                &base.join("test-images.idx"),
                &base.join("test-labels.idx"),
                classes,
                &cfg.mean,
                &cfg.std,
            )?;
            Ok((train, test))
        }
        DataFormat::CifarBinary => {
            let base = cfg.path.as_ref().expect("validated by config");
            let train = load_cifar_binary(&base.join("train"), classes, &cfg.mean, &cfg.std)?;
            let test = load_cifar_binary(&base.join("test"), classes, &cfg.mean, &cfg.std)?;
            Ok((train, test))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pack_idx_pair(dir: &Path, pixels: &[[u8; 4]], labels: &[u8]) -> (std::path::PathBuf, std::path::PathBuf) {
        let mut img = Vec::new();
        img.extend(IDX_IMAGES_MAGIC.to_be_bytes());
        img.extend((pixels.len() as u32).to_be_bytes());
        img.extend(2u32.to_be_bytes());
        img.extend(2u32.to_be_bytes());
        for p in pixels {
            img.extend(p);
        }
        let mut lab = Vec::new();
        lab.extend(IDX_LABELS_MAGIC.to_be_bytes());
        lab.extend((labels.len() as u32).to_be_bytes());
        lab.extend(labels);
        let ip = dir.join("img.idx");
        let lp = dir.join("lab.idx");
        std::fs::write(&ip, img).unwrap();
        std::fs::write(&lp, lab).unwrap();
        (ip, lp)
    }

    #[test]
    fn idx_round_trip_hand_packed() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = pack_idx_pair(dir.path(), &[[0, 255, 0, 255], [255, 0, 0, 0]], &[1, 0]);
        let d = load_idx(&ip, &lp, 2, &[0.0], &[1.0]).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.labels(), [1, 0]);
        assert_eq!(d.sample_shape(), (1, 2, 2));
        let b = d.gather(&[0]).unwrap();
        assert_eq!(b.inputs.data(), [0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn idx_bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = pack_idx_pair(dir.path(), &[[0; 4]], &[0]);
        let mut img = std::fs::read(&ip).unwrap();
        img[3] = 0x99;
        std::fs::write(&ip, img).unwrap();
        assert!(load_idx(&ip, &lp, 2, &[0.0], &[1.0]).is_err());
    }

    #[test]
    fn idx_truncation_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = pack_idx_pair(dir.path(), &[[7; 4]], &[0]);
        let img = std::fs::read(&ip).unwrap();
        std::fs::write(&ip, &img[..img.len() - 1]).unwrap();
        assert!(load_idx(&ip, &lp, 2, &[0.0], &[1.0]).is_err());
    }

    #[test]
    fn cifar_record_arithmetic() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("batch.bin");
        let mut bytes = vec![3u8];
        bytes.extend(std::iter::repeat(128u8).take(3072));
        std::fs::write(&f, &bytes).unwrap();
        let d = load_cifar_binary(&f, 10, &[0.5; 3], &[1.0; 3]).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.labels(), [3]);
        // 128/255 - 0.5, everywhere
        let b = d.gather(&[0]).unwrap();
        assert!((b.inputs.data()[0] - (128.0 / 255.0 - 0.5)).abs() < 1e-6);

        // off-by-one file size must be rejected
        bytes.push(0);
        std::fs::write(&f, &bytes).unwrap();
        assert!(load_cifar_binary(&f, 10, &[0.5; 3], &[1.0; 3]).is_err());
    }

    #[test]
    fn synthetic_is_seeded() {
        let (a, _) = synth_dataset(9, (2, 6, 6), 4, 8, 4, 0.9).unwrap();
        let (b, _) = synth_dataset(9, (2, 6, 6), 4, 8, 4, 0.9).unwrap();
        assert_eq!(a.gather(&[3]).unwrap().inputs.data(), b.gather(&[3]).unwrap().inputs.data());
        let (c, _) = synth_dataset(10, (2, 6, 6), 4, 8, 4, 0.9).unwrap();
        assert_ne!(a.gather(&[3]).unwrap().inputs.data(), c.gather(&[3]).unwrap().inputs.data());
    }
}
