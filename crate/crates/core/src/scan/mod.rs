//! Selective state-space recurrence.
//!
//! Per channel `e` and state `n` the recurrence is
//! `h[t] = a_bar[t] * h[t-1] + bx_bar[t]` with `h[-1] = 0`, read out as
//! `y[t, e] = sum_n c[t, n] * h[t, e, n] + d_skip[e] * x[t, e]`.
//!
//! Tensor layouts are time-major: `a_bar`/`bx_bar` are `[T x E x N]`,
//! `c` is `[T x N]`, `x`/`y` are `[T x E]`. State arithmetic runs in `f64`.

mod bench;
mod parallel;

pub use bench::{bench_scan, BenchRow, BenchSweep};
pub use parallel::{blelloch_inclusive, ssm_scan_parallel, ssm_scan_parallel_states, ScanPair};

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Which evaluation order to use for the recurrence. Both produce the same
/// values up to rounding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ScanVariant {
    #[default]
    Sequential,
    Parallel,
}

impl std::str::FromStr for ScanVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequential" => Ok(Self::Sequential),
            "parallel" => Ok(Self::Parallel),
            other => Err(Error::Config(format!(
                "unknown scan variant `{other}` (expected sequential|parallel)"
            ))),
        }
    }
}

impl std::fmt::Display for ScanVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Sequential => "sequential",
            Self::Parallel => "parallel",
        })
    }
}

/// Discretized scan operands.
#[derive(Clone, Copy, Debug)]
pub struct ScanInputs<'a, T> {
    pub a_bar: &'a Tensor<T>,
    pub bx_bar: &'a Tensor<T>,
    pub c: &'a Tensor<T>,
    pub d_skip: &'a Tensor<T>,
    pub x: &'a Tensor<T>,
}

impl<T: Real> ScanInputs<'_, T> {
    /// Returns `(T, E, N)` after checking every operand against it.
    pub fn dims(&self) -> Result<(usize, usize, usize)> {
        let (t, e, n) = self.a_bar.dims3()?;
        if self.bx_bar.shape() != self.a_bar.shape() {
            return Err(Error::shape("scan", self.a_bar.shape(), self.bx_bar.shape()));
        }
        if self.c.shape() != [t, n] {
            return Err(Error::shape("scan", self.a_bar.shape(), self.c.shape()));
        }
        if self.d_skip.shape() != [e] {
            return Err(Error::shape("scan", self.a_bar.shape(), self.d_skip.shape()));
        }
        if self.x.shape() != [t, e] {
            return Err(Error::shape("scan", self.a_bar.shape(), self.x.shape()));
        }
        Ok((t, e, n))
    }
}

/// Zero-order-hold discretization of `dh/dt = a h + b x` over a step `delta`.
///
/// Returns `(a_bar, b_bar)` with `a_bar = exp(delta a)` and
/// `b_bar = (exp(delta a) - 1) / a * b`, which tends to `delta * b` as `a -> 0`.
pub fn discretize(delta: f64, a: f64, b: f64) -> (f64, f64) {
    let p = zoh(delta, a);
    (p.a_bar, p.coef * b)
}

/// ZOH values and their partial derivatives for one `(delta, a)` pair.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Zoh {
    pub a_bar: f64,
    /// `(exp(delta a) - 1) / a`
    pub coef: f64,
    pub da_bar_ddelta: f64,
    pub da_bar_da: f64,
    pub dcoef_ddelta: f64,
    pub dcoef_da: f64,
}

#[inline]
pub(crate) fn zoh(delta: f64, a: f64) -> Zoh {
    let z = delta * a;
    let a_bar = z.exp();
    let (coef, dcoef_da) = if z.abs() < 1e-5 {
        (
            delta * (1.0 + z / 2.0 + z * z / 6.0),
            delta * delta * (0.5 + z / 3.0),
        )
    } else {
        let coef = z.exp_m1() / a;
        (coef, (delta * a_bar - coef) / a)
    };
    Zoh {
        a_bar,
        coef,
        da_bar_ddelta: a * a_bar,
        da_bar_da: delta * a_bar,
        dcoef_ddelta: a_bar,
        dcoef_da,
    }
}

/// Sequential evaluation of the recurrence.
pub fn ssm_scan_sequential<T: Real>(inputs: &ScanInputs<'_, T>) -> Result<Tensor<T>> {
    Ok(ssm_scan_sequential_states(inputs)?.0)
}

/// Sequential scan that also returns the hidden states `h[T x E x N]`.
pub fn ssm_scan_sequential_states<T: Real>(
    inputs: &ScanInputs<'_, T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (t_len, e_dim, n_dim) = inputs.dims()?;
    let (ad, bd) = (inputs.a_bar.data(), inputs.bx_bar.data());
    let mut h = vec![0f64; e_dim * n_dim];
    let mut states = Vec::with_capacity(t_len * e_dim * n_dim);
    for t in 0..t_len {
        let base = t * e_dim * n_dim;
        for (i, hv) in h.iter_mut().enumerate() {
            *hv = ad[base + i].as_f64() * *hv + bd[base + i].as_f64();
        }
        states.extend(h.iter().map(|&v| T::from_f64(v)));
    }
    let y = readout(inputs, (t_len, e_dim, n_dim), |t, e, n| {
        states[(t * e_dim + e) * n_dim + n].as_f64()
    });
    Ok((
        Tensor::new(&[t_len, e_dim], y)?,
        Tensor::new(&[t_len, e_dim, n_dim], states)?,
    ))
}

/// `y[t, e] = sum_n c[t, n] h[t, e, n] + d_skip[e] x[t, e]`, summed in `n` order.
fn readout<T: Real>(
    inputs: &ScanInputs<'_, T>,
    (t_len, e_dim, n_dim): (usize, usize, usize),
    state: impl Fn(usize, usize, usize) -> f64,
) -> Vec<T> {
    let (cd, dd, xd) = (inputs.c.data(), inputs.d_skip.data(), inputs.x.data());
    let mut y = Vec::with_capacity(t_len * e_dim);
    for t in 0..t_len {
        for e in 0..e_dim {
            let mut s = 0f64;
            for n in 0..n_dim {
                s += cd[t * n_dim + n].as_f64() * state(t, e, n);
            }
            s += dd[e].as_f64() * xd[t * e_dim + e].as_f64();
            y.push(T::from_f64(s));
        }
    }
    y
}

/// Gradients of the scan with respect to each of its operands.
#[derive(Clone, Debug)]
pub struct ScanGrads<T> {
    pub a_bar: Tensor<T>,
    pub bx_bar: Tensor<T>,
    pub c: Tensor<T>,
    pub d_skip: Tensor<T>,
    pub x: Tensor<T>,
}

/// Reverse-mode gradients of the recurrence, evaluated as a reverse-time scan
/// over the retained forward `states`.
pub fn scan_backward<T: Real>(
    inputs: &ScanInputs<'_, T>,
    states: &Tensor<T>,
    grad_y: &Tensor<T>,
) -> Result<ScanGrads<T>> {
    let (t_len, e_dim, n_dim) = inputs.dims()?;
    if states.shape() != inputs.a_bar.shape() {
        return Err(Error::shape(
            "scan_backward",
            inputs.a_bar.shape(),
            states.shape(),
        ));
    }
    if grad_y.shape() != [t_len, e_dim] {
        return Err(Error::shape("scan_backward", grad_y.shape(), &[t_len, e_dim]));
    }
    let (ad, cd, dd, xd) = (
        inputs.a_bar.data(),
        inputs.c.data(),
        inputs.d_skip.data(),
        inputs.x.data(),
    );
    let (hd, gy) = (states.data(), grad_y.data());
    let len3 = t_len * e_dim * n_dim;
    let mut g_a = vec![0f64; len3];
    let mut g_b = vec![0f64; len3];
    let mut g_c = vec![0f64; t_len * n_dim];
    let mut g_d = vec![0f64; e_dim];
    let mut g_x = vec![0f64; t_len * e_dim];
    // carry[e, n] = a_bar[t+1] * dL/dh[t+1]
    let mut carry = vec![0f64; e_dim * n_dim];
    for t in (0..t_len).rev() {
        for e in 0..e_dim {
            let gyv = gy[t * e_dim + e].as_f64();
            g_x[t * e_dim + e] = gyv * dd[e].as_f64();
            g_d[e] += gyv * xd[t * e_dim + e].as_f64();
            for n in 0..n_dim {
                let idx = (t * e_dim + e) * n_dim + n;
                let gh = gyv * cd[t * n_dim + n].as_f64() + carry[e * n_dim + n];
                g_c[t * n_dim + n] += gyv * hd[idx].as_f64();
                g_b[idx] = gh;
                if t > 0 {
                    g_a[idx] = gh * hd[idx - e_dim * n_dim].as_f64();
                }
                carry[e * n_dim + n] = ad[idx].as_f64() * gh;
            }
        }
    }
    let cast = |v: Vec<f64>| v.into_iter().map(T::from_f64).collect::<Vec<T>>();
    Ok(ScanGrads {
        a_bar: Tensor::new(&[t_len, e_dim, n_dim], cast(g_a))?,
        bx_bar: Tensor::new(&[t_len, e_dim, n_dim], cast(g_b))?,
        c: Tensor::new(&[t_len, n_dim], cast(g_c))?,
        d_skip: Tensor::new(&[e_dim], cast(g_d))?,
        x: Tensor::new(&[t_len, e_dim], cast(g_x))?,
    })
}

/// Input-dependent SSM parameters for one sequence, before discretization.
///
/// `a_log[E x N]` stores the state matrix as `A = -exp(a_log)` so every entry is
/// strictly negative; `delta[T x E]` are the (positive) step sizes; `b`, `c` are
/// `[T x N]` and shared across channels.
#[derive(Clone, Copy, Debug)]
pub struct SsmParams<'a, T> {
    pub a_log: &'a Tensor<T>,
    pub delta: &'a Tensor<T>,
    pub b: &'a Tensor<T>,
    pub c: &'a Tensor<T>,
    pub d_skip: &'a Tensor<T>,
}

/// Values retained by [`selective_scan`] for [`selective_scan_backward`].
#[derive(Clone, Debug)]
pub struct SsmCache<T> {
    pub a_bar: Tensor<T>,
    pub bx_bar: Tensor<T>,
    pub states: Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct SsmGrads<T> {
    pub a_log: Tensor<T>,
    pub delta: Tensor<T>,
    pub b: Tensor<T>,
    pub c: Tensor<T>,
    pub d_skip: Tensor<T>,
    pub x: Tensor<T>,
}

impl<T: Real> SsmParams<'_, T> {
    fn dims(&self, x: &Tensor<T>) -> Result<(usize, usize, usize)> {
        let (t_len, e_dim) = x.dims2()?;
        let (ae, n_dim) = self.a_log.dims2()?;
        if ae != e_dim {
            return Err(Error::shape("selective_scan", x.shape(), self.a_log.shape()));
        }
        if self.delta.shape() != x.shape() {
            return Err(Error::shape("selective_scan", x.shape(), self.delta.shape()));
        }
        for m in [self.b, self.c] {
            if m.shape() != [t_len, n_dim] {
                return Err(Error::shape("selective_scan", &[t_len, n_dim], m.shape()));
            }
        }
        Ok((t_len, e_dim, n_dim))
    }
}

/// The state matrix `A = -exp(a_log)`.
pub fn state_matrix<T: Real>(a_log: &Tensor<T>) -> Tensor<T> {
    a_log.map(|v| -v.exp())
}

/// Discretizes every `(t, e, n)` lane: `a_bar = exp(delta a)`,
/// `bx_bar = (exp(delta a) - 1)/a * b[t, n] * x[t, e]`.
pub fn discretize_sequence<T: Real>(
    params: &SsmParams<'_, T>,
    x: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (t_len, e_dim, n_dim) = params.dims(x)?;
    let a = state_matrix(params.a_log);
    let mut a_bar = Vec::with_capacity(t_len * e_dim * n_dim);
    let mut bx_bar = Vec::with_capacity(t_len * e_dim * n_dim);
    for t in 0..t_len {
        for e in 0..e_dim {
            let dt = params.delta.data()[t * e_dim + e].as_f64();
            let xv = x.data()[t * e_dim + e].as_f64();
            for n in 0..n_dim {
                let p = zoh(dt, a.data()[e * n_dim + n].as_f64());
                a_bar.push(T::from_f64(p.a_bar));
                bx_bar.push(T::from_f64(
                    p.coef * params.b.data()[t * n_dim + n].as_f64() * xv,
                ));
            }
        }
    }
    Ok((
        Tensor::new(&[t_len, e_dim, n_dim], a_bar)?,
        Tensor::new(&[t_len, e_dim, n_dim], bx_bar)?,
    ))
}

/// Discretize, then scan. `x[T x E]` is both the scanned input and the skip input.
pub fn selective_scan<T: Real>(
    params: &SsmParams<'_, T>,
    x: &Tensor<T>,
    variant: ScanVariant,
) -> Result<(Tensor<T>, SsmCache<T>)> {
    let (a_bar, bx_bar) = discretize_sequence(params, x)?;
    let inputs = ScanInputs {
        a_bar: &a_bar,
        bx_bar: &bx_bar,
        c: params.c,
        d_skip: params.d_skip,
        x,
    };
    let (y, states) = match variant {
        ScanVariant::Sequential => ssm_scan_sequential_states(&inputs)?,
        ScanVariant::Parallel => ssm_scan_parallel_states(&inputs)?,
    };
    Ok((
        y,
        SsmCache {
            a_bar,
            bx_bar,
            states,
        },
    ))
}

pub fn selective_scan_backward<T: Real>(
    params: &SsmParams<'_, T>,
    x: &Tensor<T>,
    cache: &SsmCache<T>,
    grad_y: &Tensor<T>,
) -> Result<SsmGrads<T>> {
    let (t_len, e_dim, n_dim) = params.dims(x)?;
    let inputs = ScanInputs {
        a_bar: &cache.a_bar,
        bx_bar: &cache.bx_bar,
        c: params.c,
        d_skip: params.d_skip,
        x,
    };
    let sg = scan_backward(&inputs, &cache.states, grad_y)?;
    let a = state_matrix(params.a_log);

    let mut g_delta = vec![0f64; t_len * e_dim];
    let mut g_a = vec![0f64; e_dim * n_dim];
    let mut g_b = vec![0f64; t_len * n_dim];
    let mut g_x: Vec<f64> = sg.x.data().iter().map(|v| v.as_f64()).collect();
    for t in 0..t_len {
        for e in 0..e_dim {
            let te = t * e_dim + e;
            let dt = params.delta.data()[te].as_f64();
            let xv = x.data()[te].as_f64();
            for n in 0..n_dim {
                let idx = te * n_dim + n;
                let av = a.data()[e * n_dim + n].as_f64();
                let bv = params.b.data()[t * n_dim + n].as_f64();
                let ga = sg.a_bar.data()[idx].as_f64();
                let gbx = sg.bx_bar.data()[idx].as_f64();
                let p = zoh(dt, av);
                let bx = bv * xv;
                g_delta[te] += ga * p.da_bar_ddelta + gbx * bx * p.dcoef_ddelta;
                g_a[e * n_dim + n] += ga * p.da_bar_da + gbx * bx * p.dcoef_da;
                g_b[t * n_dim + n] += gbx * p.coef * xv;
                g_x[te] += gbx * p.coef * bv;
            }
        }
    }
    // dA/da_log = A
    let g_a_log: Vec<f64> = g_a
        .iter()
        .zip(a.data())
        .map(|(g, av)| g * av.as_f64())
        .collect();
    let cast = |v: Vec<f64>| v.into_iter().map(T::from_f64).collect::<Vec<T>>();
    Ok(SsmGrads {
        a_log: Tensor::new(&[e_dim, n_dim], cast(g_a_log))?,
        delta: Tensor::new(&[t_len, e_dim], cast(g_delta))?,
        b: Tensor::new(&[t_len, n_dim], cast(g_b))?,
        c: sg.c,
        d_skip: sg.d_skip,
        x: Tensor::new(&[t_len, e_dim], cast(g_x))?,
    })
}
