use rayon::prelude::*;

use super::{readout, ScanInputs};
use crate::error::Result;
use crate::tensor::{Real, Tensor};

/// Affine map `h -> a h + b`. Composition is associative, which is what makes the
/// recurrence scannable.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanPair<T> {
    pub a: T,
    pub b: T,
}

impl<T: Real> ScanPair<T> {
    pub const fn new(a: T, b: T) -> Self {
        Self { a, b }
    }

    pub fn identity() -> Self {
        Self::new(T::one(), T::zero())
    }

    /// `self` applied first, then `next`: `(a1, b1) o (a2, b2) = (a2 a1, a2 b1 + b2)`.
    #[inline]
    pub fn then(self, next: Self) -> Self {
        Self::new(next.a * self.a, next.a * self.b + next.b)
    }
}

/// Work-efficient (up-sweep / down-sweep) scan over one lane. On return `b[t]`
/// holds `h[t]` for the recurrence `h[t] = a[t] h[t-1] + b[t]`, `h[-1] = 0`.
///
/// The combination tree depends only on the length, so results are reproducible.
pub fn blelloch_inclusive(a: &[f64], b: &mut [f64]) {
    let len = b.len();
    debug_assert_eq!(a.len(), len);
    if len == 0 {
        return;
    }
    let p = len.next_power_of_two();
    let mut ea = vec![1.0; p];
    let mut eb = vec![0.0; p];
    ea[..len].copy_from_slice(a);
    eb[..len].copy_from_slice(b);

    let mut stride = 1;
    while stride < p {
        let mut i = 2 * stride - 1;
        while i < p {
            let l = i - stride;
            eb[i] += ea[i] * eb[l];
            ea[i] *= ea[l];
            i += 2 * stride;
        }
        stride *= 2;
    }

    ea[p - 1] = 1.0;
    eb[p - 1] = 0.0;
    stride = p / 2;
    while stride >= 1 {
        let mut i = 2 * stride - 1;
        while i < p {
            let l = i - stride;
            let (ta, tb) = (ea[l], eb[l]);
            let (pa, pb) = (ea[i], eb[i]);
            ea[l] = pa;
            eb[l] = pb;
            ea[i] = ta * pa;
            eb[i] = ta * pb + tb;
            i += 2 * stride;
        }
        stride /= 2;
    }

    // eb now holds the exclusive prefix state h[t-1]
    for t in 0..len {
        b[t] += a[t] * eb[t];
    }
}

/// Same contract as [`super::ssm_scan_sequential`], evaluated lane-by-lane with
/// [`blelloch_inclusive`]. Channels run on the rayon pool.
pub fn ssm_scan_parallel<T: Real>(inputs: &ScanInputs<'_, T>) -> Result<Tensor<T>> {
    Ok(ssm_scan_parallel_states(inputs)?.0)
}

pub fn ssm_scan_parallel_states<T: Real>(
    inputs: &ScanInputs<'_, T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (t_len, e_dim, n_dim) = inputs.dims()?;
    let (ad, bd) = (inputs.a_bar.data(), inputs.bx_bar.data());

    // per channel: states laid out [N x T]
    let lanes: Vec<Vec<f64>> = (0..e_dim)
        .into_par_iter()
        .map(|e| {
            let mut out = vec![0f64; n_dim * t_len];
            let mut a = vec![0f64; t_len];
            for n in 0..n_dim {
                let b = &mut out[n * t_len..(n + 1) * t_len];
                for t in 0..t_len {
                    let idx = (t * e_dim + e) * n_dim + n;
                    a[t] = ad[idx].as_f64();
                    b[t] = bd[idx].as_f64();
                }
                blelloch_inclusive(&a, b);
            }
            out
        })
        .collect();

    let mut states = vec![T::zero(); t_len * e_dim * n_dim];
    for (e, lane) in lanes.iter().enumerate() {
        for n in 0..n_dim {
            for t in 0..t_len {
                states[(t * e_dim + e) * n_dim + n] = T::from_f64(lane[n * t_len + t]);
            }
        }
    }
    let y = readout(inputs, (t_len, e_dim, n_dim), |t, e, n| lanes[e][n * t_len + t]);
    Ok((
        Tensor::new(&[t_len, e_dim], y)?,
        Tensor::new(&[t_len, e_dim, n_dim], states)?,
    ))
}
