use crate::error::{Error, Result};
use crate::layers::ModelParams;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-3,
        }
    }
}

/// Adam with decoupled weight decay. Moment buffers are kept in `f32`, in the
/// parameter order of [`ModelParams::named`].
#[derive(Clone, Debug, PartialEq)]
pub struct AdamW {
    pub config: AdamWConfig,
    pub step: u64,
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
}

impl AdamW {
    pub fn new(config: AdamWConfig, params: &ModelParams<f32>) -> Self {
        let zeros: Vec<Vec<f32>> = params
            .named()
            .iter()
            .map(|(_, t)| vec![0.0; t.numel()])
            .collect();
        Self {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// One update using the `.grad` buffers of `params` (a missing buffer counts
    /// as zero). Fails without touching anything if a gradient is non-finite.
    pub fn step(&mut self, params: &mut ModelParams<f32>, lr: f64) -> Result<()> {
        let mut named = params.named_mut();
        if named.len() != self.m.len() {
            return Err(Error::Invariant(format!(
                "optimizer tracks {} tensors, model has {}",
                self.m.len(),
                named.len()
            )));
        }
        for (name, t) in &named {
            if t.grad().is_some_and(|g| g.iter().any(|v| !v.is_finite())) {
                return Err(Error::NonFiniteGradient {
                    tensor: name.clone(),
                });
            }
        }
        self.step += 1;
        let c = self.config;
        let bias1 = 1.0 - c.beta1.powi(self.step as i32);
        let bias2 = 1.0 - c.beta2.powi(self.step as i32);
        let decay = 1.0 - lr * c.weight_decay;
        for (k, (_, t)) in named.iter_mut().enumerate() {
            let (data, grad) = t.parts_mut();
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..data.len() {
                let g = grad.as_ref().map_or(0.0, |g| g[i] as f64);
                let mi = c.beta1 * m[i] as f64 + (1.0 - c.beta1) * g;
                let vi = c.beta2 * v[i] as f64 + (1.0 - c.beta2) * g * g;
                m[i] = mi as f32;
                v[i] = vi as f32;
                let update = (mi / bias1) / ((vi / bias2).sqrt() + c.eps);
                data[i] = (data[i] as f64 * decay - lr * update) as f32;
            }
        }
        Ok(())
    }
}

/// Rescales every `.grad` buffer so the global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(params: &mut ModelParams<f32>, max_norm: f64) -> f64 {
    let norm = params
        .named()
        .iter()
        .filter_map(|(_, t)| t.grad())
        .flat_map(|g| g.iter())
        .map(|&v| (v as f64) * (v as f64))
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let scale = (max_norm / norm) as f32;
        for (_, t) in params.named_mut() {
            if let Some(g) = t.parts_mut().1 {
                g.iter_mut().for_each(|v| *v *= scale);
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::ModelConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> ModelParams<f32> {
        let mut cfg = ModelConfig::with_in_dim(3);
        cfg.tcn.hidden_dim = 4;
        cfg.tcn.layers = 1;
        cfg.tcn.dilations = vec![1];
        cfg.tcn.kernel_size = 3;
        cfg.mamba.d_model = 4;
        cfg.mamba.n_layers = 1;
        cfg.mamba.state_dim = 2;
        ModelParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap()
    }

    #[test]
    fn zero_gradient_applies_pure_decay() {
        let mut p = tiny();
        let before = p.clone();
        let cfg = AdamWConfig {
            weight_decay: 0.1,
            ..Default::default()
        };
        let mut opt = AdamW::new(cfg, &p);
        opt.step(&mut p, 0.01).unwrap();
        for ((_, a), (_, b)) in before.named().iter().zip(p.named()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(*y, (*x as f64 * (1.0 - 0.01 * 0.1)) as f32);
            }
        }
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut p = tiny();
        let before = p.clone();
        for (i, (_, t)) in p.named_mut().into_iter().enumerate() {
            let g = if i % 2 == 0 { 0.37 } else { -2.5 };
            let n = t.numel();
            t.accumulate_grad(&vec![g; n]).unwrap();
        }
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut opt = AdamW::new(cfg, &p);
        let lr = 1e-3;
        opt.step(&mut p, lr).unwrap();
        for (i, ((_, a), (_, b))) in before.named().iter().zip(p.named()).enumerate() {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            for (x, y) in a.data().iter().zip(b.data()) {
                let delta = (*y - *x) as f64;
                assert!((delta + lr * sign).abs() < 1e-6, "{delta}");
            }
        }
    }

    #[test]
    fn non_finite_gradient_aborts_naming_tensor() {
        let mut p = tiny();
        let before = p.clone();
        let (_, t) = p.named_mut().into_iter().nth(3).unwrap();
        let mut g = vec![0.0; t.numel()];
        g[0] = f32::NAN;
        t.accumulate_grad(&g).unwrap();
        let mut opt = AdamW::new(AdamWConfig::default(), &p);
        match opt.step(&mut p, 1e-3) {
            Err(Error::NonFiniteGradient { tensor }) => assert_eq!(tensor, before.named()[3].0),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(opt.step, 0);
    }

    #[test]
    fn clipping_bounds_global_norm() {
        let mut p = tiny();
        for (_, t) in p.named_mut() {
            let n = t.numel();
            t.accumulate_grad(&vec![1.0; n]).unwrap();
        }
        let before = clip_grad_norm(&mut p, 1.0);
        assert!(before > 1.0);
        let after = clip_grad_norm(&mut p, 1e9);
        assert!((after - 1.0).abs() < 1e-5);
    }
}
