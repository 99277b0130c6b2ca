use mamba_va::data::{merge_overlapping_predictions, segment_video, FeatureSequence, SegmentBatch};
use mamba_va::Tensor;
use proptest::prelude::*;

fn params() -> impl Strategy<Value = (usize, usize, usize)> {
    (1usize..400, 1usize..64).prop_flat_map(|(n, w)| (Just(n), Just(w), 1..=w))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn count_and_coverage((n, w, s) in params()) {
        let ranges = segment_video(n, w, s).unwrap();
        // floor(n/s)+1 candidate starts; the last one is dropped when it lands on n
        let dropped = usize::from((n / s) * s >= n);
        prop_assert_eq!(ranges.len(), n / s + 1 - dropped);
        let mut covered = vec![0usize; n];
        for (i, r) in ranges.iter().enumerate() {
            prop_assert_eq!(r.start, i * s);
            prop_assert_eq!(r.len, w.min(n - r.start));
            for c in &mut covered[r.start..r.end()] {
                *c += 1;
            }
        }
        prop_assert!(covered.iter().all(|&c| c >= 1));
    }

    #[test]
    fn merge_of_split_is_identity_on_constants((n, w, s) in params(), v in -1.0f32..1.0, a in -1.0f32..1.0) {
        let ranges = segment_video(n, w, s).unwrap();
        let outputs: Vec<Tensor<f32>> = ranges
            .iter()
            .map(|_| Tensor::from_fn(&[w, 2], |i| if i % 2 == 0 { v } else { a }))
            .collect();
        let merged = merge_overlapping_predictions(&outputs, &ranges, n).unwrap();
        for row in merged.data().chunks(2) {
            prop_assert!((row[0] - v).abs() < 1e-6 && (row[1] - a).abs() < 1e-6);
        }
    }

    #[test]
    fn merge_of_split_recovers_a_signal((n, w, s) in params()) {
        // windows that copy their frames back give the original sequence
        let signal = Tensor::from_fn(&[n, 2], |i| (i as f32 * 0.1).sin());
        let seq = FeatureSequence::new("v", signal.clone()).unwrap();
        let batch = SegmentBatch::from_sequence(&seq, w, s).unwrap();
        let merged = merge_overlapping_predictions(&batch.features, &batch.ranges, n).unwrap();
        prop_assert!(merged.data().iter().zip(signal.data()).all(|(x, y)| (x - y).abs() < 1e-6));
    }
}

#[test]
fn windows_of_a_short_video_are_padded() {
    let ranges = segment_video(10, 32, 16).unwrap();
    assert_eq!(ranges.len(), 1);
    assert_eq!((ranges[0].start, ranges[0].len), (0, 10));
}
