use super::SegmentRange;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Averages per-window `[w x 2]` outputs back onto `n` frames. Each frame gets
/// the arithmetic mean over every window position that covers it; padded
/// positions are ignored.
pub fn merge_overlapping_predictions(
    outputs: &[Tensor<f32>],
    ranges: &[SegmentRange],
    n: usize,
) -> Result<Tensor<f32>> {
    if outputs.len() != ranges.len() {
        return Err(Error::shape(
            "merge_overlapping_predictions",
            &[outputs.len()],
            &[ranges.len()],
        ));
    }
    let mut sum = vec![0f64; 2 * n];
    let mut count = vec![0u32; n];
    for (out, r) in outputs.iter().zip(ranges) {
        let (w, cols) = out.dims2()?;
        if cols != 2 || r.len > w || r.end() > n {
            return Err(Error::shape(
                "merge_overlapping_predictions",
                out.shape(),
                &[r.start, r.len, n],
            ));
        }
        for t in 0..r.len {
            let f = r.start + t;
            sum[2 * f] += out.data()[2 * t] as f64;
            sum[2 * f + 1] += out.data()[2 * t + 1] as f64;
            count[f] += 1;
        }
    }
    if let Some(f) = count.iter().position(|&c| c == 0) {
        return Err(Error::Invariant(format!("frame {f} is not covered by any segment")));
    }
    let data = sum
        .iter()
        .enumerate()
        .map(|(i, s)| (s / count[i / 2] as f64) as f32)
        .collect();
    Tensor::new(&[n, 2], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::segment_video;

    fn out(vals: &[f32]) -> Tensor<f32> {
        let data = vals.iter().flat_map(|&v| [v, -v]).collect();
        Tensor::new(&[vals.len(), 2], data).unwrap()
    }

    #[test]
    fn no_overlap_concatenates() {
        let r = segment_video(5, 2, 2).unwrap();
        let outs = vec![out(&[1., 2.]), out(&[3., 4.]), out(&[5., 9.])];
        let m = merge_overlapping_predictions(&outs, &r, 5).unwrap();
        let v: Vec<f32> = m.data().iter().step_by(2).copied().collect();
        assert_eq!(v, vec![1., 2., 3., 4., 5.]);
    }

    #[test]
    fn doubly_covered_frame_is_averaged() {
        let r = [SegmentRange { start: 0, len: 2 }, SegmentRange { start: 1, len: 2 }];
        let outs = vec![out(&[0.1, 0.2]), out(&[0.4, 0.5])];
        let m = merge_overlapping_predictions(&outs, &r, 3).unwrap();
        assert!((m.data()[2] - 0.3).abs() < 1e-7);
        assert!((m.data()[3] + 0.3).abs() < 1e-7);
    }

    #[test]
    fn overlap_points_for_ten_four_three() {
        // 1-based frames 4, 7 and 10 are each covered by two windows
        let r = segment_video(10, 4, 3).unwrap();
        let outs: Vec<_> = (0..r.len()).map(|i| out(&[i as f32; 4])).collect();
        let m = merge_overlapping_predictions(&outs, &r, 10).unwrap();
        let v: Vec<f32> = m.data().iter().step_by(2).copied().collect();
        assert_eq!(v, vec![0., 0., 0., 0.5, 1., 1., 1.5, 2., 2., 2.5]);
    }

    #[test]
    fn uncovered_frame_is_an_invariant_violation() {
        let r = [SegmentRange { start: 0, len: 2 }];
        let err = merge_overlapping_predictions(&[out(&[1., 2.])], &r, 3).unwrap_err();
        assert!(matches!(err, Error::Invariant(_)));
    }
}
