//! Feature and annotation files, window segmentation, overlap merging, fold
//! assignment and the synthetic corpus generator.

mod annotations;
mod dataset;
mod features;
mod folds;
mod merge;
mod segment;
mod synthetic;

pub use annotations::{load_annotations, parse_annotations, save_annotations, INVALID_SENTINEL};
pub use dataset::{Dataset, Video};
pub use features::{
    decode_features, encode_features, load_features, save_features, FEATURE_MAGIC,
    FEATURE_VERSION,
};
pub use folds::{kfold_split, Fold};
pub use merge::merge_overlapping_predictions;
pub use segment::{segment_video, SegmentBatch, SegmentRange};
pub use synthetic::{generate_synthetic_dataset, SyntheticConfig, SyntheticGenerator};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-frame feature vectors for one video, `data[n x dim]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequence {
    pub video_id: String,
    pub data: Tensor<f32>,
}

impl FeatureSequence {
    pub fn new(video_id: impl Into<String>, data: Tensor<f32>) -> Result<Self> {
        let (n, _) = data.dims2()?;
        if n == 0 {
            return Err(Error::EmptyInput {
                op: "FeatureSequence::new",
            });
        }
        Ok(Self {
            video_id: video_id.into(),
            data,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.data.shape()[1]
    }
}

/// Per-frame valence/arousal labels with a validity mask.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct VaSeries {
    pub valence: Vec<f32>,
    pub arousal: Vec<f32>,
    pub valid: Vec<bool>,
}

impl VaSeries {
    /// Frames whose values fall outside `[-1, 1]` (or are non-finite) are marked invalid.
    pub fn from_pairs(pairs: &[(f32, f32)]) -> Self {
        let ok = |v: f32| v.is_finite() && (-1.0..=1.0).contains(&v);
        Self {
            valence: pairs.iter().map(|p| p.0).collect(),
            arousal: pairs.iter().map(|p| p.1).collect(),
            valid: pairs.iter().map(|&(v, a)| ok(v) && ok(a)).collect(),
        }
    }

    /// Wraps a `[n x 2]` prediction tensor; every frame is valid.
    pub fn from_predictions(pred: &Tensor<f32>) -> Result<Self> {
        let (n, w) = pred.dims2()?;
        if w != 2 {
            return Err(Error::shape("VaSeries::from_predictions", pred.shape(), &[n, 2]));
        }
        Ok(Self {
            valence: (0..n).map(|i| pred.data()[2 * i]).collect(),
            arousal: (0..n).map(|i| pred.data()[2 * i + 1]).collect(),
            valid: vec![true; n],
        })
    }

    pub fn len(&self) -> usize {
        self.valid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valid.is_empty()
    }

    pub fn n_valid(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// `[n x 2]` tensor of the raw values (invalid frames keep their sentinel).
    pub fn to_tensor(&self) -> Tensor<f32> {
        let data = self
            .valence
            .iter()
            .zip(&self.arousal)
            .flat_map(|(&v, &a)| [v, a])
            .collect();
        Tensor::new(&[self.len(), 2], data).expect("valence and arousal lengths agree")
    }
}
