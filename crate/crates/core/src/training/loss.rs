use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// `1 - (ccc_v + ccc_a) / 2`.
pub fn ccc_loss_value(ccc_v: f64, ccc_a: f64) -> f64 {
    1.0 - crate::metrics::p_va(ccc_v, ccc_a)
}

#[derive(Clone, Debug)]
pub struct CccLoss<T> {
    pub loss: f64,
    pub ccc_v: f64,
    pub ccc_a: f64,
    /// `dL/dpred`, zero on masked frames.
    pub grad: Tensor<T>,
}

#[derive(Clone, Debug)]
pub enum LossOutcome<T> {
    Value(CccLoss<T>),
    /// The batch cannot define a CCC (fewer than two valid frames, or a constant
    /// target column); the step should be skipped.
    Skip,
}

/// Per-column statistics and `d ccc / d pred` for one column.
fn column(pred: &[f64], target: &[f64]) -> Option<(f64, Vec<f64>)> {
    let n = pred.len() as f64;
    let mx = pred.iter().sum::<f64>() / n;
    let my = target.iter().sum::<f64>() / n;
    let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
    for (&x, &y) in pred.iter().zip(target) {
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
        cxy += (x - mx) * (y - my);
    }
    let (vx, vy, cxy) = (vx / n, vy / n, cxy / n);
    if target.iter().all(|&y| y == target[0]) || vy <= 0.0 {
        return None;
    }
    let gap = mx - my;
    let den = vx + vy + gap * gap;
    let num = 2.0 * cxy;
    let ccc = num / den;
    // d num / dx_i = 2 (y_i - my) / n ; d den / dx_i = 2 (x_i - mx + mx - my) / n
    let grad = pred
        .iter()
        .zip(target)
        .map(|(&x, &y)| {
            let dnum = 2.0 * (y - my) / n;
            let dden = 2.0 * (x - mx + gap) / n;
            (dnum * den - num * dden) / (den * den)
        })
        .collect();
    Some((ccc, grad))
}

/// CCC loss over the valid frames of `pred[m x 2]` against `target[m x 2]`.
pub fn ccc_loss<T: Real>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    mask: &[bool],
) -> Result<LossOutcome<T>> {
    let (m, cols) = pred.dims2()?;
    if cols != 2 || target.shape() != pred.shape() || mask.len() != m {
        return Err(Error::shape("ccc_loss", pred.shape(), target.shape()));
    }
    let valid: Vec<usize> = (0..m).filter(|&i| mask[i]).collect();
    if valid.len() < 2 {
        return Ok(LossOutcome::Skip);
    }
    let mut cccs = [0.0; 2];
    let mut grad = vec![T::zero(); m * 2];
    for c in 0..2 {
        let xs: Vec<f64> = valid.iter().map(|&i| pred.data()[2 * i + c].as_f64()).collect();
        let ys: Vec<f64> = valid.iter().map(|&i| target.data()[2 * i + c].as_f64()).collect();
        let Some((ccc, g)) = column(&xs, &ys) else {
            return Ok(LossOutcome::Skip);
        };
        cccs[c] = ccc;
        for (&i, gv) in valid.iter().zip(g) {
            grad[2 * i + c] = T::from_f64(-0.5 * gv);
        }
    }
    Ok(LossOutcome::Value(CccLoss {
        loss: ccc_loss_value(cccs[0], cccs[1]),
        ccc_v: cccs[0],
        ccc_a: cccs[1],
        grad: Tensor::new(&[m, 2], grad)?,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(v: &[(f64, f64)]) -> Tensor<f64> {
        Tensor::new(&[v.len(), 2], v.iter().flat_map(|&(a, b)| [a, b]).collect()).unwrap()
    }

    fn value(o: LossOutcome<f64>) -> CccLoss<f64> {
        match o {
            LossOutcome::Value(v) => v,
            LossOutcome::Skip => panic!("unexpected skip"),
        }
    }

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let t = pairs(&[(0.1, 0.3), (0.5, -0.2), (-0.3, 0.7)]);
        let l = value(ccc_loss(&t, &t, &[true; 3]).unwrap());
        assert!(l.loss.abs() < 1e-12);
    }

    #[test]
    fn composes_metric_example() {
        // valence: pred [1,2,3] vs target [2,3,4] -> 4/7; arousal: constant pred -> 0
        let pred = pairs(&[(1.0, 0.5), (2.0, 0.5), (3.0, 0.5)]);
        let target = pairs(&[(2.0, 0.1), (3.0, 0.2), (4.0, 0.6)]);
        let l = value(ccc_loss(&pred, &target, &[true; 3]).unwrap());
        assert!((l.ccc_v - 4.0 / 7.0).abs() < 1e-12);
        assert!(l.ccc_a.abs() < 1e-12);
        assert!((l.loss - 5.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn table_arithmetic() {
        assert!((ccc_loss_value(0.5454, 0.3848) - 0.5349).abs() < 1e-12);
    }

    #[test]
    fn degenerate_batches_skip() {
        let pred = pairs(&[(0.1, 0.2), (0.3, 0.4), (0.5, 0.6)]);
        let constant = pairs(&[(0.2, 0.1), (0.2, 0.3), (0.2, 0.5)]);
        assert!(matches!(ccc_loss(&pred, &constant, &[true; 3]).unwrap(), LossOutcome::Skip));
        assert!(matches!(
            ccc_loss(&pred, &pred, &[true, false, false]).unwrap(),
            LossOutcome::Skip
        ));
    }

    #[test]
    fn masked_frames_get_zero_gradient() {
        let pred = pairs(&[(0.1, 0.2), (0.9, -0.9), (0.3, 0.1), (0.5, 0.6)]);
        let target = pairs(&[(0.2, 0.1), (-5.0, -5.0), (0.1, 0.4), (0.6, 0.3)]);
        let l = value(ccc_loss(&pred, &target, &[true, false, true, true]).unwrap());
        assert_eq!(&l.grad.data()[2..4], &[0.0, 0.0]);
        assert!((0.0..=2.0).contains(&l.loss));
    }
}
