use super::{Real, Tensor};
use crate::error::{Error, Result};

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    let x = x.as_f64();
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    T::from_f64(s)
}

#[inline]
fn softplus_scalar(x: f64) -> f64 {
    if x > 20.0 {
        x
    } else if x < -20.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

pub fn silu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v * sigmoid(v))
}

pub fn softplus<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| T::from_f64(softplus_scalar(v.as_f64())))
}

pub fn tanh<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.tanh())
}

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.max(T::zero()))
}

fn check<T: Real>(op: &'static str, x: &Tensor<T>, g: &Tensor<T>) -> Result<()> {
    if x.shape() != g.shape() {
        return Err(Error::shape(op, x.shape(), g.shape()));
    }
    Ok(())
}

/// `x` is the forward input.
pub fn silu_backward<T: Real>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    check("silu_backward", x, grad_out)?;
    x.zip_map(grad_out, |v, g| {
        let s = sigmoid(v);
        g * s * (T::one() + v * (T::one() - s))
    })
}

/// `x` is the forward input.
pub fn softplus_backward<T: Real>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    check("softplus_backward", x, grad_out)?;
    x.zip_map(grad_out, |v, g| g * sigmoid(v))
}

/// `y` is the forward *output*.
pub fn tanh_backward<T: Real>(y: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    check("tanh_backward", y, grad_out)?;
    y.zip_map(grad_out, |v, g| g * (T::one() - v * v))
}

/// `x` is the forward input; the subgradient at 0 is 0.
pub fn relu_backward<T: Real>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    check("relu_backward", x, grad_out)?;
    x.zip_map(grad_out, |v, g| if v > T::zero() { g } else { T::zero() })
}
