//! In-memory dataset container, batch assembly and train-time augmentation.
//!
//! IO (idx / cifar-binary readers, synthetic generation) lives in the
//! companion crate; this module only deals with already-loaded tensors.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::tensor::{Batch, Tensor};
use crate::Rng;

/// A labeled image set held as one `(N, C, H, W)` tensor.
#[derive(Debug, Clone)]
pub struct Dataset {
    inputs: Tensor,
    labels: Vec<usize>,
    classes: usize,
}

impl Dataset {
    pub fn new(inputs: Tensor, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if inputs.rank() != 4 || inputs.dim(0) != labels.len() {
            return Err(Error::ShapeMismatch {
                op: "dataset",
                expected: alloc::vec![labels.len()],
                got: inputs.shape().to_vec(),
            });
        }
        for &l in &labels {
            if l >= classes {
                return Err(Error::LabelOutOfRange { label: l, classes });
            }
        }
        Ok(Dataset { inputs, labels, classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample_shape(&self) -> (usize, usize, usize) {
        (self.inputs.dim(1), self.inputs.dim(2), self.inputs.dim(3))
    }

    /// Copy the given samples into a contiguous batch.
    pub fn gather(&self, indices: &[usize]) -> Result<Batch> {
        let (c, h, w) = self.sample_shape();
        let mut x = Tensor::zeros(&[indices.len(), c, h, w]);
        let mut labels = Vec::with_capacity(indices.len());
        for (row, &i) in indices.iter().enumerate() {
            if i >= self.len() {
                return Err(Error::InvalidConfig(alloc::format!(
                    "sample index {i} out of range ({} samples)",
                    self.len()
                )));
            }
            x.sample_mut(row).copy_from_slice(self.inputs.sample(i));
            labels.push(self.labels[i]);
        }
        Batch::new(x, labels, self.classes)
    }

    /// The first `count` samples in stored order (a deterministic subset).
    pub fn take_prefix(&self, count: usize) -> Result<Dataset> {
        let count = count.min(self.len());
        let indices: Vec<usize> = (0..count).collect();
        let b = self.gather(&indices)?;
        Dataset::new(b.inputs, b.labels, self.classes)
    }

    /// A seeded random subset without replacement, in ascending index order
    /// so batch composition stays reproducible.
    pub fn random_subset(&self, count: usize, rng: &mut Rng) -> Result<Dataset> {
        let count = count.min(self.len());
        let mut indices: Vec<usize> = (0..self.len()).collect();
        indices.shuffle(rng);
        indices.truncate(count);
        indices.sort_unstable();
        let b = self.gather(&indices)?;
        Dataset::new(b.inputs, b.labels, self.classes)
    }
}

/// A seeded shuffled pass order over `n` samples.
pub fn shuffled_indices(n: usize, rng: &mut Rng) -> Vec<usize> {
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(rng);
    indices
}

/// Consecutive batch index ranges covering `n` samples (last may be short).
pub fn batch_ranges(n: usize, batch_size: usize) -> impl Iterator<Item = (usize, usize)> {
    let bs = batch_size.max(1);
    (0..n).step_by(bs).map(move |lo| (lo, (lo + bs).min(n)))
}

/// Train-time augmentation switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Augment {
    /// Zero-pad each side by this much, then crop back at a random offset.
    pub crop_pad: usize,
    pub hflip: bool,
}

impl Augment {
    pub const NONE: Augment = Augment { crop_pad: 0, hflip: false };

    pub fn is_noop(&self) -> bool {
        self.crop_pad == 0 && !self.hflip
    }
}

/// Random crop (with zero padding) and horizontal flip, in place, one draw
/// per sample. Draw order is fixed (crop y, crop x, flip) per sample so a
/// given rng state always produces the same batch.
pub fn augment_batch(x: &mut Tensor, aug: Augment, rng: &mut Rng) {
    if aug.is_noop() {
        return;
    }
    let (b, c, h, w) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
    let p = aug.crop_pad;
    let mut scratch = alloc::vec![0.0f32; c * h * w];
    for i in 0..b {
        let (dy, dx) = if p > 0 {
            (rng.gen_range(0..=2 * p), rng.gen_range(0..=2 * p))
        } else {
            (p, p)
        };
        let flip = aug.hflip && rng.gen_bool(0.5);
        let sample = x.sample_mut(i);
        if p > 0 && (dy, dx) != (p, p) {
            scratch.copy_from_slice(sample);
            for ch in 0..c {
                for y in 0..h {
                    for xx in 0..w {
                        // source position in the padded frame
                        let (sy, sx) = (y + dy, xx + dx);
                        let v = if sy >= p && sy < h + p && sx >= p && sx < w + p {
                            scratch[ch * h * w + (sy - p) * w + (sx - p)]
                        } else {
                            0.0
                        };
                        sample[ch * h * w + y * w + xx] = v;
                    }
                }
            }
        }
        if flip {
            for ch in 0..c {
                for y in 0..h {
                    let row = ch * h * w + y * w;
                    sample[row..row + w].reverse();
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::SeedableRng;

    fn toy() -> Dataset {
        let x = Tensor::from_vec(&[3, 1, 2, 2], (0..12).map(|v| v as f32).collect()).unwrap();
        Dataset::new(x, vec![0, 1, 0], 2).unwrap()
    }

    #[test]
    fn gather_copies_rows() {
        let d = toy();
        let b = d.gather(&[2, 0]).unwrap();
        assert_eq!(b.inputs.sample(0), [8.0, 9.0, 10.0, 11.0]);
        assert_eq!(b.inputs.sample(1), [0.0, 1.0, 2.0, 3.0]);
        assert_eq!(b.labels, [0, 0]);
        assert!(d.gather(&[3]).is_err());
    }

    #[test]
    fn label_bounds_checked() {
        let x = Tensor::zeros(&[1, 1, 2, 2]);
        assert!(Dataset::new(x, vec![2], 2).is_err());
    }

    #[test]
    fn subset_is_seeded_and_sorted() {
        let d = toy();
        let mut r1 = Rng::seed_from_u64(9);
        let mut r2 = Rng::seed_from_u64(9);
        let a = d.random_subset(2, &mut r1).unwrap();
        let b = d.random_subset(2, &mut r2).unwrap();
        assert_eq!(a.labels(), b.labels());
        assert_eq!(a.len(), 2);
    }

    #[test]
    fn batch_ranges_cover_everything() {
        let ranges: Vec<_> = batch_ranges(10, 4).collect();
        assert_eq!(ranges, vec![(0, 4), (4, 8), (8, 10)]);
    }

    #[test]
    fn shuffle_is_reproducible() {
        let mut r1 = Rng::seed_from_u64(5);
        let mut r2 = Rng::seed_from_u64(5);
        assert_eq!(shuffled_indices(100, &mut r1), shuffled_indices(100, &mut r2));
    }

    #[test]
    fn centered_crop_without_flip_is_identity_in_expectation_frame() {
        // with pad 0 and no flip the augmentation must not touch the data
        let d = toy();
        let mut b = d.gather(&[0, 1, 2]).unwrap();
        let before = b.inputs.clone();
        let mut rng = Rng::seed_from_u64(1);
        augment_batch(&mut b.inputs, Augment::NONE, &mut rng);
        assert_eq!(before.data(), b.inputs.data());
    }

    #[test]
    fn hflip_reverses_rows() {
        let x = Tensor::from_vec(&[1, 1, 1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut b = Batch::new(x, vec![0], 1).unwrap();
        let mut rng = Rng::seed_from_u64(0);
        // run until a flip happens; contents must be either identity or reversed
        let mut saw_flip = false;
        for _ in 0..16 {
            let mut t = b.inputs.clone();
            augment_batch(&mut t, Augment { crop_pad: 0, hflip: true }, &mut rng);
            if t.data() == [4.0, 3.0, 2.0, 1.0] {
                saw_flip = true;
            } else {
                assert_eq!(t.data(), b.inputs.data());
            }
        }
        assert!(saw_flip);
        b.labels[0] = 0;
    }

    #[test]
    fn crop_shifts_content() {
        // a one-hot image keeps exactly one nonzero (or zero if shifted out)
        let mut x = Tensor::zeros(&[1, 1, 4, 4]);
        x.data_mut()[5] = 1.0;
        let mut rng = Rng::seed_from_u64(3);
        for _ in 0..8 {
            let mut t = x.clone();
            augment_batch(&mut t, Augment { crop_pad: 1, hflip: false }, &mut rng);
            let nonzero = t.data().iter().filter(|v| **v != 0.0).count();
            assert!(nonzero <= 1);
        }
    }
}
