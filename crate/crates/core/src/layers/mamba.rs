use super::config::MambaConfig;
use super::params::MambaBlockParams;
use super::{add, concat_cols, mul, split_cols};
use crate::error::{Error, Result};
use crate::scan::{selective_scan, selective_scan_backward, SsmCache, SsmParams};
use crate::tensor::{
    depthwise_conv1d_causal, depthwise_conv1d_causal_backward, layer_norm, layer_norm_backward,
    linear, linear_backward, matmul, matmul_backward, silu, silu_backward, softplus,
    softplus_backward, Real, Tensor, LAYER_NORM_EPS,
};

/// Activations retained for [`mamba_block_backward`].
pub struct MambaCache<T> {
    x: Tensor<T>,
    normed: Tensor<T>,
    conv_in: Tensor<T>,
    gate_pre: Tensor<T>,
    conv_out: Tensor<T>,
    ssm_in: Tensor<T>,
    dt_pre: Tensor<T>,
    delta: Tensor<T>,
    b: Tensor<T>,
    c: Tensor<T>,
    ssm: SsmCache<T>,
    ssm_out: Tensor<T>,
    gate: Tensor<T>,
    merged: Tensor<T>,
}

/// Pre-norm residual selective-SSM block over `x[w x d_model]`.
///
/// `u = LN(x)`, `[s | z] = u W_in`, `s' = silu(dwconv(s))`,
/// `y = scan(s'; delta = softplus(s' W_dt + b_dt), B = s' W_B, C = s' W_C)`,
/// output `x + (y * silu(z)) W_out`.
pub fn mamba_block_forward<T: Real>(
    x: &Tensor<T>,
    p: &MambaBlockParams<T>,
    cfg: &MambaConfig,
) -> Result<(Tensor<T>, MambaCache<T>)> {
    let (_, d) = x.dims2()?;
    if d != cfg.d_model || p.in_proj.shape()[0] != d {
        return Err(Error::shape("mamba_block_forward", x.shape(), p.in_proj.shape()));
    }
    let e = cfg.d_inner();
    let normed = layer_norm(x, &p.norm_gamma, &p.norm_beta, LAYER_NORM_EPS)?;
    let (conv_in, gate_pre) = split_cols(&matmul(&normed, &p.in_proj)?, e)?;
    let conv_out = depthwise_conv1d_causal(&conv_in, &p.conv_weight, &p.conv_bias)?;
    let ssm_in = silu(&conv_out);
    let dt_pre = linear(&ssm_in, &p.dt_proj, Some(&p.dt_bias))?;
    let delta = softplus(&dt_pre);
    let b = matmul(&ssm_in, &p.b_proj)?;
    let c = matmul(&ssm_in, &p.c_proj)?;
    let ssm_params = SsmParams {
        a_log: &p.a_log,
        delta: &delta,
        b: &b,
        c: &c,
        d_skip: &p.d_skip,
    };
    let (ssm_out, ssm) = selective_scan(&ssm_params, &ssm_in, cfg.scan)?;
    let gate = silu(&gate_pre);
    let merged = mul(&ssm_out, &gate)?;
    let out = add(x, &matmul(&merged, &p.out_proj)?)?;
    Ok((
        out,
        MambaCache {
            x: x.clone(),
            normed,
            conv_in,
            gate_pre,
            conv_out,
            ssm_in,
            dt_pre,
            delta,
            b,
            c,
            ssm,
            ssm_out,
            gate,
            merged,
        },
    ))
}

/// Returns the block's parameter gradients and the gradient w.r.t. its input.
pub fn mamba_block_backward<T: Real>(
    p: &MambaBlockParams<T>,
    cache: &MambaCache<T>,
    grad_out: &Tensor<T>,
) -> Result<(MambaBlockParams<T>, Tensor<T>)> {
    let (g_merged, g_out_proj) = matmul_backward(&cache.merged, &p.out_proj, grad_out)?;
    let g_ssm_out = mul(&g_merged, &cache.gate)?;
    let g_gate = mul(&g_merged, &cache.ssm_out)?;
    let g_gate_pre = silu_backward(&cache.gate_pre, &g_gate)?;

    let ssm_params = SsmParams {
        a_log: &p.a_log,
        delta: &cache.delta,
        b: &cache.b,
        c: &cache.c,
        d_skip: &p.d_skip,
    };
    let sg = selective_scan_backward(&ssm_params, &cache.ssm_in, &cache.ssm, &g_ssm_out)?;

    let g_dt_pre = softplus_backward(&cache.dt_pre, &sg.delta)?;
    let (gx_dt, g_dt_proj, g_dt_bias) = linear_backward(&cache.ssm_in, &p.dt_proj, &g_dt_pre)?;
    let (gx_b, g_b_proj) = matmul_backward(&cache.ssm_in, &p.b_proj, &sg.b)?;
    let (gx_c, g_c_proj) = matmul_backward(&cache.ssm_in, &p.c_proj, &sg.c)?;
    let g_ssm_in = add(&add(&add(&sg.x, &gx_dt)?, &gx_b)?, &gx_c)?;

    let g_conv_out = silu_backward(&cache.conv_out, &g_ssm_in)?;
    let (g_conv_in, g_conv_w, g_conv_b) =
        depthwise_conv1d_causal_backward(&cache.conv_in, &p.conv_weight, &g_conv_out)?;
    let g_proj = concat_cols(&g_conv_in, &g_gate_pre)?;
    let (g_normed, g_in_proj) = matmul_backward(&cache.normed, &p.in_proj, &g_proj)?;
    let (gx_norm, g_gamma, g_beta) =
        layer_norm_backward(&cache.x, &p.norm_gamma, LAYER_NORM_EPS, &g_normed)?;
    let gx = add(grad_out, &gx_norm)?;

    Ok((
        MambaBlockParams {
            norm_gamma: g_gamma,
            norm_beta: g_beta,
            in_proj: g_in_proj,
            conv_weight: g_conv_w,
            conv_bias: g_conv_b,
            dt_proj: g_dt_proj,
            dt_bias: g_dt_bias,
            b_proj: g_b_proj,
            c_proj: g_c_proj,
            a_log: sg.a_log,
            d_skip: sg.d_skip,
            out_proj: g_out_proj,
        },
        gx,
    ))
}
