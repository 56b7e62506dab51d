//! Training engine for small convolutional networks with gradual structured
//! channel pruning guided by feature relevance scores.
//!
//! The crate is `no_std`-compatible (with `alloc`); all file and terminal IO
//! lives in the companion `frsp-cli` crate. The pieces fit together like this:
//!
//! - [`tensor`] / [`kernels`]: dense f32 tensors and the forward/backward
//!   numeric kernels (conv, pooling, linear, batch norm, softmax cross
//!   entropy, SGD with momentum).
//! - [`graph`]: architecture description, forward execution with activation
//!   capture, backprop, and physical channel-removal surgery.
//! - [`lrp`]: relevance back-propagation with the alpha/beta decomposition
//!   rule, producing per-layer relevance maps.
//! - [`scoring`]: aggregation of relevance maps into class-conditioned
//!   feature-relevance matrices, class-accuracy weighting, global channel
//!   ranking, plus L1/L2/random baseline criteria.
//! - [`schedule`] / [`trainer`]: the outer training loop with periodic
//!   score-select-prune events.
//! - [`cost`]: parameter/FLOP accounting and the effort factor.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod cost;
pub mod dataset;
pub mod error;
pub mod graph;
pub mod kernels;
pub mod lrp;
pub mod schedule;
pub mod scoring;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::{Batch, Tensor};

/// The deterministic RNG used everywhere in the crate.
pub type Rng = rand_chacha::ChaCha8Rng;
