//! Sequence regression of continuous valence/arousal from precomputed per-frame
//! visual features.
//!
//! The stack is: overlapping window segmentation, a dilated causal TCN, a cascade
//! of selective state-space (Mamba) blocks and a `tanh`-bounded two-output head.
//! Training minimizes `1 - mean(CCC)` with AdamW under a linear warmup schedule.
//!
//! Everything is implemented on small dense tensors with explicit per-op backward
//! functions; [`gradcheck`] holds the finite-difference harness used to audit them.

pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod metrics;
pub mod rng;
pub mod scan;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::{Real, Tensor};
