use mamba_va::data::VaSeries;
use mamba_va::metrics::{ccc, evaluate, fold_report, p_va, FoldRow, REPORT_CSV_HEADER};
use mamba_va::Tensor;
use proptest::prelude::*;

/// Textbook two-pass formula with population moments.
fn oracle(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let vx = x.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / n;
    let vy = y.iter().map(|v| (v - my).powi(2)).sum::<f64>() / n;
    let cov = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / n;
    2.0 * cov / (vx + vy + (mx - my).powi(2))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matches_oracle(pairs in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2..300)) {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let got = ccc(&x, &y, None).unwrap().ccc;
        prop_assert!((got - oracle(&x, &y)).abs() < 1e-10);
    }

    #[test]
    fn symmetric_and_bounded(pairs in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2..100)) {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let a = ccc(&x, &y, None).unwrap();
        let b = ccc(&y, &x, None).unwrap();
        prop_assert!((a.ccc - b.ccc).abs() < 1e-12);
        prop_assert!(a.ccc.abs() <= a.pearson.abs() + 1e-12);
    }

    #[test]
    fn mask_equals_filtering(pairs in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0, any::<bool>()), 4..100)) {
        let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let m: Vec<bool> = pairs.iter().map(|p| p.2).collect();
        let kept: Vec<(f64, f64)> = pairs.iter().filter(|p| p.2).map(|p| (p.0, p.1)).collect();
        prop_assume!(kept.len() >= 2);
        let (kx, ky): (Vec<f64>, Vec<f64>) = kept.into_iter().unzip();
        let masked = ccc(&x, &y, Some(&m)).unwrap().ccc;
        prop_assert!((masked - ccc(&kx, &ky, None).unwrap().ccc).abs() < 1e-12);
    }
}

#[test]
fn worked_example() {
    assert!((ccc(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0], None).unwrap().ccc - 4.0 / 7.0).abs() < 1e-12);
}

#[test]
fn table_rows() {
    let table = [
        ("0", 0.5454, 0.3848, "0.4651"),
        ("1", 0.5423, 0.3612, "0.4517"),
        ("2", 0.5362, 0.4310, "0.4836"),
        ("3", 0.5231, 0.3413, "0.4322"),
        ("4", 0.5216, 0.3540, "0.4378"),
        ("5", 0.5305, 0.4275, "0.4790"),
    ];
    for (_, v, a, avg) in table {
        assert_eq!(format!("{:.4}", p_va(v, a)), avg);
    }
    assert_eq!(p_va(0.24, 0.20), 0.22);
    let rows = table.iter().map(|&(f, v, a, _)| FoldRow::from_cccs(f, v, a)).collect();
    let text = fold_report(rows).unwrap().to_text();
    let fold2 = text.lines().find(|l| l.starts_with('2')).unwrap();
    assert_eq!(fold2.split_whitespace().collect::<Vec<_>>(), ["2", "0.5362", "0.4310", "0.4836"]);
}

#[test]
fn evaluation_concatenates_videos() {
    let pred1 = Tensor::new(&[3, 2], vec![0.1, 0.2, 0.3, 0.1, 0.5, 0.0]).unwrap();
    let pred2 = Tensor::new(&[2, 2], vec![-0.2, 0.4, 0.0, 0.3]).unwrap();
    let lab1 = VaSeries::from_pairs(&[(0.0, 0.1), (0.4, 0.2), (0.6, -5.0)]);
    let lab2 = VaSeries::from_pairs(&[(-0.1, 0.5), (0.1, 0.2)]);
    let r = evaluate(&[(&pred1, &lab1), (&pred2, &lab2)]).unwrap();
    assert_eq!(r.n_valid, 4);
    let x = [0.0, 0.4, -0.1, 0.1];
    let y = [0.1f32, 0.3, -0.2, 0.0].map(f64::from);
    assert!((r.valence.ccc - oracle(&x, &y)).abs() < 1e-7);
}

#[test]
fn report_golden_format() {
    let t = fold_report(vec![FoldRow::from_cccs("0", 0.5454, 0.3848)]).unwrap();
    let csv = t.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(REPORT_CSV_HEADER));
    assert!(REPORT_CSV_HEADER.starts_with("fold,ccc_valence,ccc_arousal,p_va"));
    assert_eq!(lines.next(), Some("0,0.5454,0.3848,0.4651,"));
    assert_eq!(lines.next(), Some("baseline,0.2400,0.2000,0.2200,"));
}
