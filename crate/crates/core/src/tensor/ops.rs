use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Fixed layer-norm epsilon.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// `[M x K] x [K x N] -> [M x N]`.
pub fn matmul<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, k) = a.dims2()?;
    let (kb, n) = b.dims2()?;
    if k != kb {
        return Err(Error::shape("matmul", a.shape(), b.shape()));
    }
    let (ad, bd) = (a.data(), b.data());
    let mut out = Vec::with_capacity(m * n);
    let mut acc = vec![0f64; n];
    for i in 0..m {
        acc.fill(0.0);
        for (p, &av) in ad[i * k..(i + 1) * k].iter().enumerate() {
            let av = av.as_f64();
            if av == 0.0 {
                continue;
            }
            for (s, &bv) in acc.iter_mut().zip(&bd[p * n..(p + 1) * n]) {
                *s += av * bv.as_f64();
            }
        }
        out.extend(acc.iter().map(|&v| T::from_f64(v)));
    }
    Tensor::new(&[m, n], out)
}

/// Gradients of `matmul` with respect to both operands.
pub fn matmul_backward<T: Real>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (m, k) = a.dims2()?;
    let (_, n) = b.dims2()?;
    if grad_out.shape() != [m, n] || b.shape()[0] != k {
        return Err(Error::shape("matmul_backward", grad_out.shape(), &[m, n]));
    }
    let (ad, bd, gd) = (a.data(), b.data(), grad_out.data());

    // dA = dY . B^T
    let mut ga = Vec::with_capacity(m * k);
    for i in 0..m {
        let grow = &gd[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &bd[p * n..(p + 1) * n];
            let s: f64 = grow
                .iter()
                .zip(brow)
                .map(|(&g, &bv)| g.as_f64() * bv.as_f64())
                .sum();
            ga.push(T::from_f64(s));
        }
    }

    // dB = A^T . dY
    let mut gb = vec![0f64; k * n];
    for i in 0..m {
        let grow = &gd[i * n..(i + 1) * n];
        for p in 0..k {
            let av = ad[i * k + p].as_f64();
            if av == 0.0 {
                continue;
            }
            for (s, &g) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                *s += av * g.as_f64();
            }
        }
    }
    Ok((
        Tensor::new(&[m, k], ga)?,
        Tensor::new(&[k, n], gb.into_iter().map(T::from_f64).collect())?,
    ))
}

/// Adds `bias[N]` to every row of `x[M x N]`.
pub fn add_row_bias<T: Real>(x: &mut Tensor<T>, bias: &Tensor<T>) -> Result<()> {
    let (_, n) = x.dims2()?;
    if bias.shape() != [n] {
        return Err(Error::shape("add_row_bias", x.shape(), bias.shape()));
    }
    for row in x.data_mut().chunks_mut(n) {
        for (v, &b) in row.iter_mut().zip(bias.data()) {
            *v += b;
        }
    }
    Ok(())
}

/// `x[T x in] . w[in x out] (+ bias[out])`.
pub fn linear<T: Real>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    let mut y = matmul(x, weight)?;
    if let Some(b) = bias {
        add_row_bias(&mut y, b)?;
    }
    Ok(y)
}

/// Returns `(d_x, d_weight, d_bias)`; the bias gradient is the column sum of `grad_out`.
pub fn linear_backward<T: Real>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (gx, gw) = matmul_backward(x, weight, grad_out)?;
    let (_, n) = grad_out.dims2()?;
    let mut gb = vec![0f64; n];
    for row in grad_out.data().chunks(n) {
        for (s, &g) in gb.iter_mut().zip(row) {
            *s += g.as_f64();
        }
    }
    Ok((gx, gw, Tensor::new(&[n], gb.into_iter().map(T::from_f64).collect())?))
}

fn check_conv<T: Real>(
    op: &'static str,
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    dilation: usize,
) -> Result<(usize, usize, usize, usize)> {
    let (c_in, t_len) = x.dims2()?;
    let (c_out, k_in, k) = kernel.dims3()?;
    if t_len == 0 || c_in == 0 {
        return Err(Error::EmptyInput { op });
    }
    if k_in != c_in {
        return Err(Error::shape(op, x.shape(), kernel.shape()));
    }
    if k == 0 || dilation == 0 {
        return Err(Error::Config(format!(
            "{op}: kernel size and dilation must be positive (got {k}, {dilation})"
        )));
    }
    Ok((c_in, t_len, c_out, k))
}

/// Dilated causal 1-D convolution over `x[C_in x T]` with `kernel[C_out x C_in x K]`.
///
/// Tap `k` reads `x[t - (K-1-k)*dilation]`; positions before the start are zero.
pub fn conv1d_causal<T: Real>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
    dilation: usize,
) -> Result<Tensor<T>> {
    let (c_in, t_len, c_out, k) = check_conv("conv1d_causal", x, kernel, dilation)?;
    if bias.shape() != [c_out] {
        return Err(Error::shape("conv1d_causal", kernel.shape(), bias.shape()));
    }
    let (xd, wd) = (x.data(), kernel.data());
    let mut out = Vec::with_capacity(c_out * t_len);
    let mut acc = vec![0f64; t_len];
    for o in 0..c_out {
        acc.fill(bias.data()[o].as_f64());
        for i in 0..c_in {
            let xrow = &xd[i * t_len..(i + 1) * t_len];
            for tap in 0..k {
                let shift = (k - 1 - tap) * dilation;
                if shift >= t_len {
                    continue;
                }
                let w = wd[(o * c_in + i) * k + tap].as_f64();
                for (s, &xv) in acc[shift..].iter_mut().zip(xrow) {
                    *s += w * xv.as_f64();
                }
            }
        }
        out.extend(acc.iter().map(|&v| T::from_f64(v)));
    }
    Tensor::new(&[c_out, t_len], out)
}

/// Returns `(d_x, d_kernel, d_bias)`.
pub fn conv1d_causal_backward<T: Real>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    dilation: usize,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (c_in, t_len, c_out, k) = check_conv("conv1d_causal_backward", x, kernel, dilation)?;
    if grad_out.shape() != [c_out, t_len] {
        return Err(Error::shape(
            "conv1d_causal_backward",
            grad_out.shape(),
            &[c_out, t_len],
        ));
    }
    let (xd, wd, gd) = (x.data(), kernel.data(), grad_out.data());

    let gbias: Vec<T> = gd
        .chunks(t_len)
        .map(|row| T::from_f64(row.iter().map(|g| g.as_f64()).sum()))
        .collect();

    let mut gkernel = Vec::with_capacity(c_out * c_in * k);
    for o in 0..c_out {
        let grow = &gd[o * t_len..(o + 1) * t_len];
        for i in 0..c_in {
            let xrow = &xd[i * t_len..(i + 1) * t_len];
            for tap in 0..k {
                let shift = (k - 1 - tap) * dilation;
                let s: f64 = if shift >= t_len {
                    0.0
                } else {
                    grow[shift..]
                        .iter()
                        .zip(xrow)
                        .map(|(&g, &xv)| g.as_f64() * xv.as_f64())
                        .sum()
                };
                gkernel.push(T::from_f64(s));
            }
        }
    }

    let mut gx = Vec::with_capacity(c_in * t_len);
    let mut acc = vec![0f64; t_len];
    for i in 0..c_in {
        acc.fill(0.0);
        for o in 0..c_out {
            let grow = &gd[o * t_len..(o + 1) * t_len];
            for tap in 0..k {
                let shift = (k - 1 - tap) * dilation;
                if shift >= t_len {
                    continue;
                }
                let w = wd[(o * c_in + i) * k + tap].as_f64();
                for (s, &g) in acc.iter_mut().zip(&grow[shift..]) {
                    *s += w * g.as_f64();
                }
            }
        }
        gx.extend(acc.iter().map(|&v| T::from_f64(v)));
    }

    Ok((
        Tensor::new(&[c_in, t_len], gx)?,
        Tensor::new(&[c_out, c_in, k], gkernel)?,
        Tensor::new(&[c_out], gbias)?,
    ))
}

/// Per-channel causal convolution over time-major `x[T x C]` with `weight[C x K]`.
pub fn depthwise_conv1d_causal<T: Real>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (t_len, c) = x.dims2()?;
    let (wc, k) = weight.dims2()?;
    if t_len == 0 {
        return Err(Error::EmptyInput {
            op: "depthwise_conv1d_causal",
        });
    }
    if wc != c || bias.shape() != [c] || k == 0 {
        return Err(Error::shape(
            "depthwise_conv1d_causal",
            x.shape(),
            weight.shape(),
        ));
    }
    let (xd, wd, bd) = (x.data(), weight.data(), bias.data());
    let mut out = Vec::with_capacity(t_len * c);
    for t in 0..t_len {
        for ch in 0..c {
            let mut s = bd[ch].as_f64();
            for tap in 0..k {
                let shift = k - 1 - tap;
                if shift <= t {
                    s += wd[ch * k + tap].as_f64() * xd[(t - shift) * c + ch].as_f64();
                }
            }
            out.push(T::from_f64(s));
        }
    }
    Tensor::new(&[t_len, c], out)
}

/// Returns `(d_x, d_weight, d_bias)`.
pub fn depthwise_conv1d_causal_backward<T: Real>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (t_len, c) = x.dims2()?;
    let (_, k) = weight.dims2()?;
    if grad_out.shape() != x.shape() {
        return Err(Error::shape(
            "depthwise_conv1d_causal_backward",
            grad_out.shape(),
            x.shape(),
        ));
    }
    let (xd, wd, gd) = (x.data(), weight.data(), grad_out.data());
    let mut gx = vec![0f64; t_len * c];
    let mut gw = vec![0f64; c * k];
    let mut gb = vec![0f64; c];
    for t in 0..t_len {
        for ch in 0..c {
            let g = gd[t * c + ch].as_f64();
            gb[ch] += g;
            for tap in 0..k {
                let shift = k - 1 - tap;
                if shift <= t {
                    let src = (t - shift) * c + ch;
                    gw[ch * k + tap] += g * xd[src].as_f64();
                    gx[src] += g * wd[ch * k + tap].as_f64();
                }
            }
        }
    }
    let cast = |v: Vec<f64>| v.into_iter().map(T::from_f64).collect::<Vec<T>>();
    Ok((
        Tensor::new(&[t_len, c], cast(gx))?,
        Tensor::new(&[c, k], cast(gw))?,
        Tensor::new(&[c], cast(gb))?,
    ))
}

fn rows_of<T: Real>(x: &Tensor<T>, gamma: &Tensor<T>, op: &'static str) -> Result<usize> {
    let d = *x.shape().last().ok_or(Error::EmptyInput { op })?;
    if d == 0 {
        return Err(Error::EmptyInput { op });
    }
    if gamma.shape() != [d] {
        return Err(Error::shape(op, x.shape(), gamma.shape()));
    }
    Ok(d)
}

fn row_stats<T: Real>(row: &[T], eps: f64) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().map(|v| v.as_f64()).sum::<f64>() / n;
    let var = row
        .iter()
        .map(|v| {
            let c = v.as_f64() - mean;
            c * c
        })
        .sum::<f64>()
        / n;
    (mean, 1.0 / (var + eps).sqrt())
}

/// Normalizes each row (last axis) of `x` to zero mean and unit variance, then
/// applies `gamma` and `beta`.
pub fn layer_norm<T: Real>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: f64,
) -> Result<Tensor<T>> {
    let d = rows_of(x, gamma, "layer_norm")?;
    if beta.shape() != [d] {
        return Err(Error::shape("layer_norm", gamma.shape(), beta.shape()));
    }
    let mut out = Vec::with_capacity(x.numel());
    for row in x.data().chunks(d) {
        let (mean, rstd) = row_stats(row, eps);
        for ((&v, &g), &b) in row.iter().zip(gamma.data()).zip(beta.data()) {
            out.push(T::from_f64(
                (v.as_f64() - mean) * rstd * g.as_f64() + b.as_f64(),
            ));
        }
    }
    Tensor::new(x.shape(), out)
}

/// Returns `(d_x, d_gamma, d_beta)`.
pub fn layer_norm_backward<T: Real>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    eps: f64,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let d = rows_of(x, gamma, "layer_norm_backward")?;
    if grad_out.shape() != x.shape() {
        return Err(Error::shape(
            "layer_norm_backward",
            grad_out.shape(),
            x.shape(),
        ));
    }
    let n = d as f64;
    let mut gx = Vec::with_capacity(x.numel());
    let mut ggamma = vec![0f64; d];
    let mut gbeta = vec![0f64; d];
    let mut xhat = vec![0f64; d];
    let mut gxhat = vec![0f64; d];
    for (row, grow) in x.data().chunks(d).zip(grad_out.data().chunks(d)) {
        let (mean, rstd) = row_stats(row, eps);
        let (mut sum_g, mut sum_gx) = (0.0, 0.0);
        for j in 0..d {
            let g = grow[j].as_f64();
            xhat[j] = (row[j].as_f64() - mean) * rstd;
            gxhat[j] = g * gamma.data()[j].as_f64();
            ggamma[j] += g * xhat[j];
            gbeta[j] += g;
            sum_g += gxhat[j];
            sum_gx += gxhat[j] * xhat[j];
        }
        for j in 0..d {
            gx.push(T::from_f64(
                rstd * (gxhat[j] - sum_g / n - xhat[j] * sum_gx / n),
            ));
        }
    }
    let cast = |v: Vec<f64>| v.into_iter().map(T::from_f64).collect::<Vec<T>>();
    Ok((
        Tensor::new(x.shape(), gx)?,
        Tensor::new(&[d], cast(ggamma))?,
        Tensor::new(&[d], cast(gbeta))?,
    ))
}
