use super::params::HeadParams;
use crate::error::Result;
use crate::tensor::{linear, linear_backward, tanh, tanh_backward, Real, Tensor};

pub struct HeadCache<T> {
    input: Tensor<T>,
    output: Tensor<T>,
}

/// `tanh(m W + b)`: column 0 is valence, column 1 arousal.
pub fn head_forward<T: Real>(
    m: &Tensor<T>,
    params: &HeadParams<T>,
) -> Result<(Tensor<T>, HeadCache<T>)> {
    let y = tanh(&linear(m, &params.weight, Some(&params.bias))?);
    Ok((
        y.clone(),
        HeadCache {
            input: m.clone(),
            output: y,
        },
    ))
}

pub fn head_backward<T: Real>(
    params: &HeadParams<T>,
    cache: &HeadCache<T>,
    grad_out: &Tensor<T>,
) -> Result<(HeadParams<T>, Tensor<T>)> {
    let g_logits = tanh_backward(&cache.output, grad_out)?;
    let (gx, gw, gb) = linear_backward(&cache.input, &params.weight, &g_logits)?;
    Ok((HeadParams { weight: gw, bias: gb }, gx))
}
