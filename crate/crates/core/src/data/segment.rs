use super::FeatureSequence;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One window of a video. `start` is 0-based; `len` is the number of real
/// (non-padded) frames, so the window covers frames `start .. start + len`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SegmentRange {
    pub start: usize,
    pub len: usize,
}

impl SegmentRange {
    pub fn end(&self) -> usize {
        self.start + self.len
    }
}

/// Splits `n` frames into windows of `w` taken every `s` frames.
///
/// `n / s + 1` windows are generated, window `i` starting at frame `i * s`;
/// windows starting past the last frame are dropped and the final windows are
/// clipped to `n` (the remainder of the window is padding).
pub fn segment_video(n: usize, w: usize, s: usize) -> Result<Vec<SegmentRange>> {
    if n == 0 {
        return Err(Error::EmptyInput { op: "segment_video" });
    }
    if w == 0 || s == 0 {
        return Err(Error::Config(format!(
            "window and stride must be positive (w={w}, s={s})"
        )));
    }
    if s > w {
        return Err(Error::Config(format!(
            "stride {s} exceeds window {w}; frames would be left uncovered"
        )));
    }
    Ok((0..=n / s)
        .map(|i| i * s)
        .filter(|&start| start < n)
        .map(|start| SegmentRange {
            start,
            len: w.min(n - start),
        })
        .collect())
}

/// Zero-padded `[w x dim]` windows of one video with their pad masks.
#[derive(Clone, Debug)]
pub struct SegmentBatch {
    pub window: usize,
    pub stride: usize,
    pub ranges: Vec<SegmentRange>,
    pub features: Vec<Tensor<f32>>,
    /// `pad_mask[i][t]` is true for padded positions.
    pub pad_mask: Vec<Vec<bool>>,
}

impl SegmentBatch {
    pub fn from_sequence(seq: &FeatureSequence, window: usize, stride: usize) -> Result<Self> {
        let ranges = segment_video(seq.n_frames(), window, stride)?;
        let dim = seq.dim();
        let src = seq.data.data();
        let mut features = Vec::with_capacity(ranges.len());
        let mut pad_mask = Vec::with_capacity(ranges.len());
        for r in &ranges {
            let mut data = vec![0f32; window * dim];
            data[..r.len * dim].copy_from_slice(&src[r.start * dim..r.end() * dim]);
            features.push(Tensor::new(&[window, dim], data)?);
            pad_mask.push((0..window).map(|t| t >= r.len).collect());
        }
        Ok(Self {
            window,
            stride,
            ranges,
            features,
            pad_mask,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_based(r: &[SegmentRange]) -> Vec<(usize, usize)> {
        r.iter().map(|s| (s.start + 1, s.end())).collect()
    }

    #[test]
    fn ten_frames_window_four_stride_three() {
        let r = segment_video(10, 4, 3).unwrap();
        assert_eq!(one_based(&r), vec![(1, 4), (4, 7), (7, 10), (10, 10)]);
        assert_eq!(r[3].len, 1);
    }

    #[test]
    fn hundred_frames_no_overlap() {
        let r = segment_video(100, 32, 32).unwrap();
        assert_eq!(r.len(), 4);
        assert_eq!(one_based(&r)[3], (97, 100));
        assert_eq!(32 - r[3].len, 28);
    }

    #[test]
    fn drops_window_starting_past_the_end() {
        assert_eq!(segment_video(4, 4, 4).unwrap().len(), 1);
    }

    #[test]
    fn rejects_stride_larger_than_window() {
        assert!(matches!(segment_video(10, 3, 4), Err(Error::Config(_))));
    }

    #[test]
    fn batch_pads_with_zeros() {
        let data = Tensor::from_fn(&[5, 2], |i| i as f32 + 1.0);
        let seq = FeatureSequence::new("v", data).unwrap();
        let b = SegmentBatch::from_sequence(&seq, 4, 2).unwrap();
        assert_eq!(b.ranges.len(), 3);
        assert_eq!(b.features[2].data(), &[9., 10., 0., 0., 0., 0., 0., 0.]);
        assert_eq!(b.pad_mask[2], vec![false, true, true, true]);
    }
}
