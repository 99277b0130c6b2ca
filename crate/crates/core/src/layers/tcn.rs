use super::config::TcnConfig;
use super::params::{Residual, TcnLayerParams};
use super::{add, Mode};
use crate::error::{Error, Result};
use crate::tensor::{
    conv1d_causal, conv1d_causal_backward, dropout, dropout_backward, relu, relu_backward,
    DropoutMask, Real, Tensor,
};

struct LayerCache<T> {
    /// Channel-major input `[C_in x T]`.
    input: Tensor<T>,
    pre: Tensor<T>,
    mask: Option<DropoutMask<T>>,
}

pub struct TcnCache<T> {
    layers: Vec<LayerCache<T>>,
}

/// Stacked residual blocks `x + dropout(relu(conv(x)))` over time-major
/// `x[w x in_dim]`, returning `[w x hidden_dim]`.
pub fn tcn_forward<T: Real>(
    x: &Tensor<T>,
    layers: &[TcnLayerParams<T>],
    cfg: &TcnConfig,
    mode: &mut Mode<'_>,
) -> Result<(Tensor<T>, TcnCache<T>)> {
    let (_, in_dim) = x.dims2()?;
    let first = layers.first().ok_or(Error::Config("tcn has no layers".into()))?;
    if first.weight.shape()[1] != in_dim {
        return Err(Error::shape("tcn_forward", x.shape(), first.weight.shape()));
    }
    let mut cur = x.transpose()?;
    let mut caches = Vec::with_capacity(layers.len());
    for (p, &dilation) in layers.iter().zip(&cfg.dilations) {
        let pre = conv1d_causal(&cur, &p.weight, &p.bias, dilation)?;
        let act = relu(&pre);
        let (dropped, mask) = match mode {
            Mode::Eval => dropout::<T, dyn rand::RngCore>(&act, cfg.dropout, None)?,
            Mode::Train(rng) => dropout(&act, cfg.dropout, Some(&mut **rng))?,
        };
        let skip = match &p.residual {
            Some(Residual { weight, bias }) => conv1d_causal(&cur, weight, bias, 1)?,
            None => cur.clone(),
        };
        let next = add(&dropped, &skip)?;
        caches.push(LayerCache {
            input: cur,
            pre,
            mask,
        });
        cur = next;
    }
    Ok((cur.transpose()?, TcnCache { layers: caches }))
}

/// Returns per-layer parameter gradients and the gradient w.r.t. the input.
pub fn tcn_backward<T: Real>(
    layers: &[TcnLayerParams<T>],
    cfg: &TcnConfig,
    cache: &TcnCache<T>,
    grad_out: &Tensor<T>,
) -> Result<(Vec<TcnLayerParams<T>>, Tensor<T>)> {
    let mut g = grad_out.transpose()?;
    let mut grads = Vec::with_capacity(layers.len());
    for ((p, lc), &dilation) in layers
        .iter()
        .zip(&cache.layers)
        .zip(&cfg.dilations)
        .rev()
    {
        let g_act = dropout_backward(lc.mask.as_ref(), &g)?;
        let g_pre = relu_backward(&lc.pre, &g_act)?;
        let (gx_conv, g_w, g_b) = conv1d_causal_backward(&lc.input, &p.weight, dilation, &g_pre)?;
        let (gx_skip, residual) = match &p.residual {
            Some(r) => {
                let (gx, gw, gb) = conv1d_causal_backward(&lc.input, &r.weight, 1, &g)?;
                (gx, Some(Residual { weight: gw, bias: gb }))
            }
            None => (g, None),
        };
        g = add(&gx_conv, &gx_skip)?;
        grads.push(TcnLayerParams {
            weight: g_w,
            bias: g_b,
            residual,
        });
    }
    grads.reverse();
    Ok((grads, g.transpose()?))
}
