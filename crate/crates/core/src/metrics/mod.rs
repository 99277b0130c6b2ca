//! Concordance correlation coefficient, the valence/arousal challenge score and
//! fold-level reporting.

mod report;

pub use report::{fold_report, EvalReport, FoldRow, FoldTable, BASELINE, REPORT_CSV_HEADER};

use crate::data::VaSeries;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Moments behind one CCC value. Variances and covariance are population
/// (divide-by-N) statistics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CccBreakdown {
    pub n: usize,
    pub mean_x: f64,
    pub mean_y: f64,
    pub var_x: f64,
    pub var_y: f64,
    pub cov_xy: f64,
    /// Zero when either series is constant.
    pub pearson: f64,
    pub ccc: f64,
    /// Set when the CCC denominator vanished (both series constant with equal
    /// means); `ccc` is then reported as 0.
    pub degenerate: bool,
}

/// Streaming (Welford) accumulator for the paired moments.
#[derive(Clone, Copy, Debug, Default)]
pub struct CccAccumulator {
    n: usize,
    mean_x: f64,
    mean_y: f64,
    m2_x: f64,
    m2_y: f64,
    c_xy: f64,
}

impl CccAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push(&mut self, x: f64, y: f64) {
        self.n += 1;
        let n = self.n as f64;
        let dx = x - self.mean_x;
        let dy = y - self.mean_y;
        self.mean_x += dx / n;
        self.mean_y += dy / n;
        self.m2_x += dx * (x - self.mean_x);
        self.m2_y += dy * (y - self.mean_y);
        self.c_xy += dx * (y - self.mean_y);
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn finish(&self) -> Result<CccBreakdown> {
        if self.n < 2 {
            return Err(Error::InsufficientData {
                needed: 2,
                got: self.n,
            });
        }
        let n = self.n as f64;
        let (var_x, var_y, cov_xy) = (self.m2_x / n, self.m2_y / n, self.c_xy / n);
        let pearson = if var_x > 0.0 && var_y > 0.0 {
            cov_xy / (var_x * var_y).sqrt()
        } else {
            0.0
        };
        let gap = self.mean_x - self.mean_y;
        let denom = var_x + var_y + gap * gap;
        let (ccc, degenerate) = if denom > 0.0 {
            (2.0 * cov_xy / denom, false)
        } else {
            (0.0, true)
        };
        Ok(CccBreakdown {
            n: self.n,
            mean_x: self.mean_x,
            mean_y: self.mean_y,
            var_x,
            var_y,
            cov_xy,
            pearson,
            ccc,
            degenerate,
        })
    }
}

/// `2 s_xy / (s_x^2 + s_y^2 + (mean_x - mean_y)^2)` over the pairs where `mask` is true.
pub fn ccc(x: &[f64], y: &[f64], mask: Option<&[bool]>) -> Result<CccBreakdown> {
    if x.len() != y.len() || mask.is_some_and(|m| m.len() != x.len()) {
        return Err(Error::shape(
            "ccc",
            &[x.len()],
            &[y.len(), mask.map_or(x.len(), <[bool]>::len)],
        ));
    }
    let mut acc = CccAccumulator::new();
    for i in 0..x.len() {
        if mask.is_none_or(|m| m[i]) {
            acc.push(x[i], y[i]);
        }
    }
    acc.finish()
}

/// Challenge score: mean of the valence and arousal CCCs.
pub fn p_va(ccc_v: f64, ccc_a: f64) -> f64 {
    (ccc_a + ccc_v) / 2.0
}

/// CCC of predictions against labels over the concatenation of all valid frames
/// of all `(predictions[n x 2], labels)` pairs.
pub fn evaluate(videos: &[(&Tensor<f32>, &VaSeries)]) -> Result<EvalReport> {
    let mut acc = [CccAccumulator::new(), CccAccumulator::new()];
    for (pred, labels) in videos {
        let (n, cols) = pred.dims2()?;
        if cols != 2 || n != labels.len() {
            return Err(Error::shape("evaluate", pred.shape(), &[labels.len(), 2]));
        }
        for t in (0..n).filter(|&t| labels.valid[t]) {
            acc[0].push(labels.valence[t] as f64, pred.data()[2 * t] as f64);
            acc[1].push(labels.arousal[t] as f64, pred.data()[2 * t + 1] as f64);
        }
    }
    let valence = acc[0].finish()?;
    let arousal = acc[1].finish()?;
    Ok(EvalReport {
        p_va: p_va(valence.ccc, arousal.ccc),
        n_valid: valence.n,
        valence,
        arousal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_agreement() {
        let x = [0.1, 0.5, -0.3];
        let b = ccc(&x, &x, None).unwrap();
        assert!((b.ccc - 1.0).abs() < 1e-12);
        assert!((b.pearson - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_series_gives_zero() {
        let b = ccc(&[0.2, 0.2, 0.2], &[0.1, 0.5, -0.3], None).unwrap();
        assert_eq!(b.ccc, 0.0);
        assert!(!b.degenerate);
    }

    #[test]
    fn hand_example_four_sevenths() {
        let b = ccc(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0], None).unwrap();
        assert!((b.var_x - 2.0 / 3.0).abs() < 1e-15);
        assert!((b.cov_xy - 2.0 / 3.0).abs() < 1e-15);
        assert!((b.ccc - 4.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_denominator_is_flagged() {
        let b = ccc(&[0.3, 0.3], &[0.3, 0.3], None).unwrap();
        assert!(b.degenerate);
        assert_eq!(b.ccc, 0.0);
    }

    #[test]
    fn mask_and_insufficient_data() {
        let b = ccc(&[1.0, 9.0, 2.0, 3.0], &[2.0, -9.0, 3.0, 4.0], Some(&[true, false, true, true]))
            .unwrap();
        assert!((b.ccc - 4.0 / 7.0).abs() < 1e-12);
        assert!(matches!(
            ccc(&[1.0, 2.0], &[1.0, 2.0], Some(&[true, false])),
            Err(Error::InsufficientData { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn p_va_table_values() {
        assert_eq!(format!("{:.4}", p_va(0.5454, 0.3848)), "0.4651");
        assert_eq!(format!("{:.4}", p_va(0.24, 0.20)), "0.2200");
        assert_eq!(p_va(1.0, 1.0), 1.0);
    }

    #[test]
    fn evaluate_identity_and_zero_predictions() {
        let labels = VaSeries::from_pairs(&[(0.1, -0.2), (0.4, 0.3), (-0.5, 0.9), (-5.0, -5.0)]);
        let pred = labels.to_tensor();
        let r = evaluate(&[(&pred, &labels)]).unwrap();
        assert!((r.p_va - 1.0).abs() < 1e-12);
        assert_eq!(r.n_valid, 3);
        let zeros = Tensor::zeros(&[4, 2]);
        let r = evaluate(&[(&zeros, &labels)]).unwrap();
        assert_eq!(r.p_va, 0.0);
    }
}
