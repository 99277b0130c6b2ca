//! Finite-difference audit of every hand-written backward pass.
//!
//! Each check draws a small random instance (all extents at most 8) in `f64`,
//! forms the scalar `L = sum(out * r)` for a random `r` (or the CCC loss where
//! the op is a loss), and compares the analytical gradient of every input with
//! central differences at step [`FD_STEP`].
//!
//! The error of one input is `max|g_a - g_n| / max(max|g_a|, max|g_n|, 1e-8)`,
//! i.e. the worst entry measured against the scale of that gradient, so a single
//! near-zero entry does not dominate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::layers::{
    head_backward, head_forward, mamba_block_backward, mamba_block_forward, tcn_backward,
    tcn_forward, Mode, Model, ModelConfig, ModelParams,
};
use crate::rng::SeedStreams;
use crate::scan::{
    scan_backward, selective_scan, selective_scan_backward, ssm_scan_sequential_states,
    ScanInputs, ScanVariant, SsmParams,
};
use crate::tensor::{self, Tensor, LAYER_NORM_EPS};
use crate::training::{ccc_loss, LossOutcome};

pub const FD_STEP: f64 = 1e-3;
/// Ceiling for single operations and layers.
pub const OP_TOLERANCE: f64 = 1e-4;
/// Ceiling for the loss composed with the whole model.
pub const MODEL_TOLERANCE: f64 = 1e-3;

/// Every check name, in run order. `model` is the only one outside the `ops` scope.
pub const CHECKS: &[&str] = &[
    "matmul",
    "linear",
    "conv1d_causal",
    "depthwise_conv1d_causal",
    "layer_norm",
    "silu",
    "softplus",
    "tanh",
    "relu",
    "dropout",
    "ssm_scan",
    "selective_scan",
    "mamba_block",
    "tcn",
    "head",
    "ccc_loss",
    "model",
];

#[derive(Clone, Debug, PartialEq)]
pub struct GradReport {
    pub op: String,
    /// Input whose gradient had the largest error.
    pub worst_input: String,
    pub max_rel_error: f64,
    pub tolerance: f64,
    /// Number of scalar inputs perturbed.
    pub checked: usize,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

pub fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let max_abs = |v: &[f64]| v.iter().fold(0f64, |m, x| m.max(x.abs()));
    let diff = analytic
        .iter()
        .zip(numeric)
        .fold(0f64, |m, (a, n)| m.max((a - n).abs()));
    diff / max_abs(analytic).max(max_abs(numeric)).max(1e-8)
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(lo..hi))
}

type Inputs = Vec<(String, Tensor<f64>)>;

/// Compares `backward(xs, r)` with central differences of `sum(forward(xs) * r)`.
fn check<F, B>(op: &str, inputs: Inputs, tolerance: f64, seed: u64, forward: F, backward: B) -> Result<GradReport>
where
    F: Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>,
    B: Fn(&[Tensor<f64>], &Tensor<f64>) -> Result<Vec<Tensor<f64>>>,
{
    let (names, mut xs): (Vec<String>, Vec<Tensor<f64>>) = inputs.into_iter().unzip();
    let out = forward(&xs)?;
    let mut rng = SeedStreams::new(seed).stream(&format!("gradcheck.{op}.weights"));
    let r = uniform(&mut rng, out.shape(), -1.0, 1.0);
    let analytic = backward(&xs, &r)?;
    if analytic.len() != xs.len() {
        return Err(Error::Invariant(format!(
            "{op}: backward returned {} gradients for {} inputs",
            analytic.len(),
            xs.len()
        )));
    }
    let mut report = GradReport {
        op: op.to_string(),
        worst_input: String::new(),
        max_rel_error: 0.0,
        tolerance,
        checked: 0,
    };
    for i in 0..xs.len() {
        if analytic[i].shape() != xs[i].shape() {
            return Err(Error::Invariant(format!(
                "{op}: gradient of `{}` has shape {:?}, input has {:?}",
                names[i],
                analytic[i].shape(),
                xs[i].shape()
            )));
        }
        let mut numeric = vec![0.0; xs[i].numel()];
        for (j, slot) in numeric.iter_mut().enumerate() {
            let orig = xs[i].data()[j];
            xs[i].data_mut()[j] = orig + FD_STEP;
            let plus = dot(&forward(&xs)?, &r);
            xs[i].data_mut()[j] = orig - FD_STEP;
            let minus = dot(&forward(&xs)?, &r);
            xs[i].data_mut()[j] = orig;
            *slot = (plus - minus) / (2.0 * FD_STEP);
        }
        report.checked += numeric.len();
        let err = rel_error(analytic[i].data(), &numeric);
        if err >= report.max_rel_error {
            report.max_rel_error = err;
            report.worst_input = names[i].clone();
        }
    }
    Ok(report)
}

fn named(items: Vec<(&str, Tensor<f64>)>) -> Inputs {
    items.into_iter().map(|(n, t)| (n.to_string(), t)).collect()
}

/// Randomizes every parameter whose name starts with `prefix` and exposes them as
/// check inputs after `x`. The returned closure writes a slice back into a copy.
fn param_inputs(
    params: &mut ModelParams<f64>,
    prefix: &str,
    rng: &mut ChaCha8Rng,
    x: Tensor<f64>,
) -> (Inputs, Vec<String>) {
    let mut inputs = vec![("x".to_string(), x)];
    let mut keys = Vec::new();
    for (name, t) in params.named_mut() {
        if !name.starts_with(prefix) {
            continue;
        }
        if name.ends_with("a_log") {
            // keep A = -exp(a_log) in a realistic range
            for v in t.data_mut() {
                *v += rng.gen_range(-0.2..0.2);
            }
        } else {
            let s = if name.ends_with("norm_gamma") { 1.0 } else { 0.0 };
            for v in t.data_mut() {
                *v = s + rng.gen_range(-0.6..0.6);
            }
        }
        inputs.push((name.clone(), t.clone()));
        keys.push(name);
    }
    (inputs, keys)
}

fn with_values(template: &ModelParams<f64>, keys: &[String], xs: &[Tensor<f64>]) -> ModelParams<f64> {
    let mut p = template.clone();
    for (name, t) in p.named_mut() {
        if let Some(i) = keys.iter().position(|k| *k == name) {
            *t = xs[i].clone();
        }
    }
    p
}

fn grads_for(grads: &ModelParams<f64>, keys: &[String], gx: Tensor<f64>) -> Vec<Tensor<f64>> {
    let all = grads.named();
    let mut out = vec![gx];
    for k in keys {
        let (_, t) = all.iter().find(|(n, _)| n == k).expect("same structure");
        out.push((*t).clone());
    }
    out
}

fn tiny_model_config(in_dim: usize, hidden: usize, state_dim: usize, tcn_layers: usize, mamba_layers: usize) -> ModelConfig {
    let mut cfg = ModelConfig::with_in_dim(in_dim);
    cfg.tcn.hidden_dim = hidden;
    cfg.mamba.d_model = hidden;
    cfg.tcn.layers = tcn_layers;
    cfg.tcn.kernel_size = 3;
    cfg.tcn.dilations = (0..tcn_layers).map(|i| 1 << i).collect();
    cfg.mamba.n_layers = mamba_layers;
    cfg.mamba.state_dim = state_dim;
    cfg
}

fn activation(
    op: &str,
    seed: u64,
    rng: &mut ChaCha8Rng,
    f: fn(&Tensor<f64>) -> Tensor<f64>,
    b: fn(&Tensor<f64>, &Tensor<f64>) -> Result<Tensor<f64>>,
    uses_output: bool,
) -> Result<GradReport> {
    let mut x = uniform(rng, &[5, 6], -3.0, 3.0);
    if op == "relu" {
        // stay clear of the kink so central differences are exact
        x = x.map(|v| if v.abs() < 0.1 { v + 0.2 } else { v });
    }
    check(
        op,
        named(vec![("x", x)]),
        OP_TOLERANCE,
        seed,
        |xs| Ok(f(&xs[0])),
        move |xs, g| {
            let at = if uses_output { f(&xs[0]) } else { xs[0].clone() };
            Ok(vec![b(&at, g)?])
        },
    )
}

/// Runs one named check.
pub fn run_check(name: &str, seed: u64) -> Result<GradReport> {
    let mut rng = SeedStreams::new(seed).stream(&format!("gradcheck.{name}"));
    let rng = &mut rng;
    match name {
        "matmul" => check(
            name,
            named(vec![("a", uniform(rng, &[4, 5], -1.0, 1.0)), ("b", uniform(rng, &[5, 3], -1.0, 1.0))]),
            OP_TOLERANCE,
            seed,
            |xs| tensor::matmul(&xs[0], &xs[1]),
            |xs, g| {
                let (ga, gb) = tensor::matmul_backward(&xs[0], &xs[1], g)?;
                Ok(vec![ga, gb])
            },
        ),
        "linear" => check(
            name,
            named(vec![
                ("x", uniform(rng, &[6, 4], -1.0, 1.0)),
                ("weight", uniform(rng, &[4, 3], -1.0, 1.0)),
                ("bias", uniform(rng, &[3], -1.0, 1.0)),
            ]),
            OP_TOLERANCE,
            seed,
            |xs| tensor::linear(&xs[0], &xs[1], Some(&xs[2])),
            |xs, g| {
                let (gx, gw, gb) = tensor::linear_backward(&xs[0], &xs[1], g)?;
                Ok(vec![gx, gw, gb])
            },
        ),
        "conv1d_causal" => check(
            name,
            named(vec![
                ("x", uniform(rng, &[3, 8], -1.0, 1.0)),
                ("kernel", uniform(rng, &[4, 3, 3], -1.0, 1.0)),
                ("bias", uniform(rng, &[4], -1.0, 1.0)),
            ]),
            OP_TOLERANCE,
            seed,
            |xs| tensor::conv1d_causal(&xs[0], &xs[1], &xs[2], 2),
            |xs, g| {
                let (gx, gk, gb) = tensor::conv1d_causal_backward(&xs[0], &xs[1], 2, g)?;
                Ok(vec![gx, gk, gb])
            },
        ),
        "depthwise_conv1d_causal" => check(
            name,
            named(vec![
                ("x", uniform(rng, &[7, 3], -1.0, 1.0)),
                ("weight", uniform(rng, &[3, 4], -1.0, 1.0)),
                ("bias", uniform(rng, &[3], -1.0, 1.0)),
            ]),
            OP_TOLERANCE,
            seed,
            |xs| tensor::depthwise_conv1d_causal(&xs[0], &xs[1], &xs[2]),
            |xs, g| {
                let (gx, gw, gb) = tensor::depthwise_conv1d_causal_backward(&xs[0], &xs[1], g)?;
                Ok(vec![gx, gw, gb])
            },
        ),
        "layer_norm" => check(
            name,
            named(vec![
                ("x", uniform(rng, &[4, 6], -2.0, 2.0)),
                ("gamma", uniform(rng, &[6], 0.5, 1.5)),
                ("beta", uniform(rng, &[6], -0.5, 0.5)),
            ]),
            OP_TOLERANCE,
            seed,
            |xs| tensor::layer_norm(&xs[0], &xs[1], &xs[2], LAYER_NORM_EPS),
            |xs, g| {
                let (gx, gg, gb) = tensor::layer_norm_backward(&xs[0], &xs[1], LAYER_NORM_EPS, g)?;
                Ok(vec![gx, gg, gb])
            },
        ),
        "silu" => activation(name, seed, rng, tensor::silu, tensor::silu_backward, false),
        "softplus" => activation(name, seed, rng, tensor::softplus, tensor::softplus_backward, false),
        "tanh" => activation(name, seed, rng, tensor::tanh, tensor::tanh_backward, true),
        "relu" => activation(name, seed, rng, tensor::relu, tensor::relu_backward, false),
        "dropout" => {
            let mask_seed: u64 = rng.gen();
            let apply = move |x: &Tensor<f64>| {
                let mut r = ChaCha8Rng::seed_from_u64(mask_seed);
                tensor::dropout(x, 0.3, Some(&mut r))
            };
            check(
                name,
                named(vec![("x", uniform(rng, &[6, 5], -1.0, 1.0))]),
                OP_TOLERANCE,
                seed,
                move |xs| Ok(apply(&xs[0])?.0),
                move |xs, g| {
                    let mask = apply(&xs[0])?.1;
                    Ok(vec![tensor::dropout_backward(mask.as_ref(), g)?])
                },
            )
        }
        "ssm_scan" => {
            let (t, e, n) = (5, 2, 3);
            let inputs = named(vec![
                ("a_bar", uniform(rng, &[t, e, n], 0.2, 0.95)),
                ("bx_bar", uniform(rng, &[t, e, n], -1.0, 1.0)),
                ("c", uniform(rng, &[t, n], -1.0, 1.0)),
                ("d_skip", uniform(rng, &[e], -1.0, 1.0)),
                ("x", uniform(rng, &[t, e], -1.0, 1.0)),
            ]);
            check(
                name,
                inputs,
                OP_TOLERANCE,
                seed,
                |xs| Ok(ssm_scan_sequential_states(&operands(xs))?.0),
                |xs, g| {
                    let ins = operands(xs);
                    let (_, states) = ssm_scan_sequential_states(&ins)?;
                    let gr = scan_backward(&ins, &states, g)?;
                    Ok(vec![gr.a_bar, gr.bx_bar, gr.c, gr.d_skip, gr.x])
                },
            )
        }
        "selective_scan" => {
            let (t, e, n) = (6, 3, 4);
            let a_log = Tensor::from_fn(&[e, n], |i| ((i % n + 1) as f64).ln() + rng.gen_range(-0.2..0.2));
            let inputs = named(vec![
                ("a_log", a_log),
                ("delta", uniform(rng, &[t, e], 0.05, 1.0)),
                ("b", uniform(rng, &[t, n], -1.0, 1.0)),
                ("c", uniform(rng, &[t, n], -1.0, 1.0)),
                ("d_skip", uniform(rng, &[e], -1.0, 1.0)),
                ("x", uniform(rng, &[t, e], -1.0, 1.0)),
            ]);
            check(
                name,
                inputs,
                OP_TOLERANCE,
                seed,
                |xs| Ok(selective_scan(&ssm(xs), &xs[5], ScanVariant::Sequential)?.0),
                |xs, g| {
                    let (_, cache) = selective_scan(&ssm(xs), &xs[5], ScanVariant::Sequential)?;
                    let gr = selective_scan_backward(&ssm(xs), &xs[5], &cache, g)?;
                    Ok(vec![gr.a_log, gr.delta, gr.b, gr.c, gr.d_skip, gr.x])
                },
            )
        }
        "mamba_block" => {
            let cfg = tiny_model_config(4, 4, 3, 1, 1);
            let mut params: ModelParams<f64> = ModelParams::init(&cfg, rng)?;
            let x = uniform(rng, &[7, 4], -1.0, 1.0);
            let (inputs, keys) = param_inputs(&mut params, "mamba.0.", rng, x);
            let mc = cfg.mamba.clone();
            let mc2 = mc.clone();
            let (template, keys2) = (params.clone(), keys.clone());
            check(
                name,
                inputs,
                OP_TOLERANCE,
                seed,
                move |xs| {
                    let p = with_values(&params, &keys, &xs[1..]);
                    Ok(mamba_block_forward(&xs[0], &p.mamba[0], &mc)?.0)
                },
                move |xs, g| {
                    let p = with_values(&template, &keys2, &xs[1..]);
                    let (_, cache) = mamba_block_forward(&xs[0], &p.mamba[0], &mc2)?;
                    let (gp, gx) = mamba_block_backward(&p.mamba[0], &cache, g)?;
                    let mut grads = ModelParams { tcn: Vec::new(), mamba: vec![gp], head: p.head.clone() };
                    grads.tcn = p.tcn.clone();
                    Ok(grads_for(&grads, &keys2, gx))
                },
            )
        }
        "tcn" => {
            let cfg = tiny_model_config(3, 4, 2, 2, 1);
            let mut params: ModelParams<f64> = ModelParams::init(&cfg, rng)?;
            let x = uniform(rng, &[8, 3], -1.0, 1.0);
            let (inputs, keys) = param_inputs(&mut params, "tcn.", rng, x);
            let mask_seed: u64 = rng.gen();
            let tc = cfg.tcn.clone();
            let run = move |p: &ModelParams<f64>, x: &Tensor<f64>| {
                let mut r = ChaCha8Rng::seed_from_u64(mask_seed);
                tcn_forward(x, &p.tcn, &tc, &mut Mode::Train(&mut r))
            };
            let (run2, tc2) = (run.clone(), cfg.tcn.clone());
            let (template, keys2) = (params.clone(), keys.clone());
            check(
                name,
                inputs,
                OP_TOLERANCE,
                seed,
                move |xs| Ok(run(&with_values(&params, &keys, &xs[1..]), &xs[0])?.0),
                move |xs, g| {
                    let p = with_values(&template, &keys2, &xs[1..]);
                    let (_, cache) = run2(&p, &xs[0])?;
                    let (gl, gx) = tcn_backward(&p.tcn, &tc2, &cache, g)?;
                    let grads = ModelParams { tcn: gl, ..p };
                    Ok(grads_for(&grads, &keys2, gx))
                },
            )
        }
        "head" => {
            let cfg = tiny_model_config(3, 5, 2, 1, 1);
            let mut params: ModelParams<f64> = ModelParams::init(&cfg, rng)?;
            let x = uniform(rng, &[6, 5], -1.0, 1.0);
            let (inputs, keys) = param_inputs(&mut params, "head.", rng, x);
            let (template, keys2) = (params.clone(), keys.clone());
            check(
                name,
                inputs,
                OP_TOLERANCE,
                seed,
                move |xs| Ok(head_forward(&xs[0], &with_values(&params, &keys, &xs[1..]).head)?.0),
                move |xs, g| {
                    let p = with_values(&template, &keys2, &xs[1..]);
                    let (_, cache) = head_forward(&xs[0], &p.head)?;
                    let (gh, gx) = head_backward(&p.head, &cache, g)?;
                    Ok(grads_for(&ModelParams { head: gh, ..p }, &keys2, gx))
                },
            )
        }
        "ccc_loss" => {
            let m = 8;
            let target = uniform(rng, &[m, 2], -1.0, 1.0);
            let mask: Vec<bool> = (0..m).map(|i| i != 3).collect();
            let (t2, mask2) = (target.clone(), mask.clone());
            check(
                name,
                named(vec![("pred", uniform(rng, &[m, 2], -1.0, 1.0))]),
                OP_TOLERANCE,
                seed,
                move |xs| Ok(Tensor::full(&[1], loss_of(&xs[0], &target, &mask)?.0)),
                move |xs, g| {
                    let grad = loss_of(&xs[0], &t2, &mask2)?.1;
                    Ok(vec![grad.map(|v| v * g.data()[0])])
                },
            )
        }
        "model" => model_check(seed, rng),
        other => Err(Error::Config(format!(
            "unknown grad-check `{other}`; expected one of {}",
            CHECKS.join(", ")
        ))),
    }
}

fn operands(xs: &[Tensor<f64>]) -> ScanInputs<'_, f64> {
    ScanInputs {
        a_bar: &xs[0],
        bx_bar: &xs[1],
        c: &xs[2],
        d_skip: &xs[3],
        x: &xs[4],
    }
}

fn ssm(xs: &[Tensor<f64>]) -> SsmParams<'_, f64> {
    SsmParams {
        a_log: &xs[0],
        delta: &xs[1],
        b: &xs[2],
        c: &xs[3],
        d_skip: &xs[4],
    }
}

fn loss_of(pred: &Tensor<f64>, target: &Tensor<f64>, mask: &[bool]) -> Result<(f64, Tensor<f64>)> {
    match ccc_loss(pred, target, mask)? {
        LossOutcome::Value(l) => Ok((l.loss, l.grad)),
        LossOutcome::Skip => Err(Error::Invariant("grad-check drew a degenerate batch".into())),
    }
}

/// CCC loss of the whole model (w=8, in_dim=4, hidden 8, N=2, one TCN layer,
/// one Mamba block) against a random target, checked on features and weights.
fn model_check(seed: u64, rng: &mut ChaCha8Rng) -> Result<GradReport> {
    let cfg = tiny_model_config(4, 8, 2, 1, 1);
    let mut params: ModelParams<f64> = ModelParams::init(&cfg, rng)?;
    let x = uniform(rng, &[8, 4], -1.0, 1.0);
    let (inputs, keys) = param_inputs(&mut params, "", rng, x);
    let target = uniform(rng, &[8, 2], -1.0, 1.0);
    let mask = vec![true; 8];
    let model_at = move |xs: &[Tensor<f64>]| Model {
        config: cfg.clone(),
        params: with_values(&params, &keys, &xs[1..]),
    };
    let (model_at2, t2, m2) = (model_at.clone(), target.clone(), mask.clone());
    let keys2: Vec<String> = inputs[1..].iter().map(|(n, _)| n.clone()).collect();
    check(
        "model",
        inputs,
        MODEL_TOLERANCE,
        seed,
        move |xs| {
            let pred = model_at(xs).predict(&xs[0])?;
            Ok(Tensor::full(&[1], loss_of(&pred, &target, &mask)?.0))
        },
        move |xs, g| {
            let model = model_at2(xs);
            let (pred, cache) = model.forward(&xs[0], &mut Mode::Eval)?;
            let grad = loss_of(&pred, &t2, &m2)?.1.map(|v| v * g.data()[0]);
            let (gp, gx) = model.backward(&cache, &grad)?;
            Ok(grads_for(&gp, &keys2, gx))
        },
    )
}

/// Checks selected by `scope`: `full` (everything), `ops` (everything but the
/// whole-model check) or a comma-separated list of names from [`CHECKS`].
pub fn run_scope(scope: &str, seed: u64) -> Result<Vec<GradReport>> {
    let names: Vec<&str> = match scope {
        "full" => CHECKS.to_vec(),
        "ops" => CHECKS.iter().copied().filter(|&c| c != "model").collect(),
        list => list.split(',').map(str::trim).filter(|s| !s.is_empty()).collect(),
    };
    if names.is_empty() {
        return Err(Error::Config("empty grad-check scope".into()));
    }
    names.into_iter().map(|n| run_check(n, seed)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_check_passes() {
        for r in run_scope("full", 7).unwrap() {
            assert!(r.passed(), "{r:?}");
            assert!(r.checked > 0);
        }
    }

    #[test]
    fn catches_a_wrong_gradient() {
        let r = check(
            "bad_square",
            named(vec![("x", Tensor::from_fn(&[3], |i| i as f64 + 1.0))]),
            OP_TOLERANCE,
            0,
            |xs| Ok(xs[0].map(|v| v * v)),
            |xs, g| Ok(vec![xs[0].zip_map(g, |v, g| v * g)?]),
        )
        .unwrap();
        assert!(!r.passed());
        assert!((r.max_rel_error - 0.5).abs() < 1e-6);
    }

    #[test]
    fn matmul_sum_gradient_is_all_ones() {
        let a = Tensor::full(&[2, 2], 1.0f64);
        let eye = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let ones = Tensor::full(&[2, 2], 1.0);
        let (ga, _) = tensor::matmul_backward(&a, &eye, &ones).unwrap();
        let mut numeric = vec![0.0; 4];
        for (j, slot) in numeric.iter_mut().enumerate() {
            let mut p = a.clone();
            p.data_mut()[j] += FD_STEP;
            let mut m = a.clone();
            m.data_mut()[j] -= FD_STEP;
            let s = |t: &Tensor<f64>| tensor::matmul(t, &eye).unwrap().data().iter().sum::<f64>();
            *slot = (s(&p) - s(&m)) / (2.0 * FD_STEP);
        }
        assert_eq!(ga.data(), &[1.0; 4]);
        assert!(rel_error(ga.data(), &numeric) < 1e-10);
    }

    #[test]
    fn unknown_scope_is_a_config_error() {
        assert!(matches!(run_scope("nope", 0), Err(Error::Config(_))));
    }
}
