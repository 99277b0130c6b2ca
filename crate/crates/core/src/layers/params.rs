use rand::Rng;

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct Residual<T> {
    /// `[out x in x 1]`
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TcnLayerParams<T> {
    /// `[out x in x K]`
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    /// 1x1 projection on the skip path when input and output widths differ.
    pub residual: Option<Residual<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MambaBlockParams<T> {
    pub norm_gamma: Tensor<T>,
    pub norm_beta: Tensor<T>,
    /// `[d_model x 2*d_inner]`, SSM branch then gate branch.
    pub in_proj: Tensor<T>,
    /// `[d_inner x conv_width]`
    pub conv_weight: Tensor<T>,
    pub conv_bias: Tensor<T>,
    /// `[d_inner x d_inner]`
    pub dt_proj: Tensor<T>,
    pub dt_bias: Tensor<T>,
    /// `[d_inner x N]`
    pub b_proj: Tensor<T>,
    /// `[d_inner x N]`
    pub c_proj: Tensor<T>,
    /// `[d_inner x N]`, `A = -exp(a_log)`
    pub a_log: Tensor<T>,
    pub d_skip: Tensor<T>,
    /// `[d_inner x d_model]`
    pub out_proj: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadParams<T> {
    /// `[d_model x 2]`
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Every learnable tensor of the model. The same structure doubles as the
/// gradient container returned by backward passes.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T = f32> {
    pub tcn: Vec<TcnLayerParams<T>>,
    pub mamba: Vec<MambaBlockParams<T>>,
    pub head: HeadParams<T>,
}

fn uniform<T: Real, R: Rng + ?Sized>(rng: &mut R, shape: &[usize], bound: f64) -> Tensor<T> {
    Tensor::from_fn(shape, |_| T::from_f64(rng.gen_range(-bound..=bound)))
}

/// Inverse of softplus: the pre-activation that maps to `y`.
fn inv_softplus(y: f64) -> f64 {
    y + (-(-y).exp_m1()).ln()
}

impl<T: Real> ModelParams<T> {
    /// Freshly initialized parameters.
    ///
    /// Convolutions and projections are uniform in `+-1/sqrt(fan_in)`; `a_log` rows
    /// are `ln(1..=N)`; `dt_bias` places the initial step sizes log-uniformly in
    /// `[1e-3, 1e-1]`; `d_skip` is one; each block's output projection is zero so
    /// every block starts as the identity.
    pub fn init<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let (tc, mc) = (&cfg.tcn, &cfg.mamba);
        let k = tc.kernel_size;

        let mut tcn = Vec::with_capacity(tc.layers);
        for layer in 0..tc.layers {
            let c_in = if layer == 0 { tc.in_dim } else { tc.hidden_dim };
            let bound = 1.0 / ((c_in * k) as f64).sqrt();
            let weight = uniform(rng, &[tc.hidden_dim, c_in, k], bound);
            let bias = uniform(rng, &[tc.hidden_dim], bound);
            let residual = (c_in != tc.hidden_dim).then(|| {
                let rb = 1.0 / (c_in as f64).sqrt();
                Residual {
                    weight: uniform(rng, &[tc.hidden_dim, c_in, 1], rb),
                    bias: uniform(rng, &[tc.hidden_dim], rb),
                }
            });
            tcn.push(TcnLayerParams {
                weight,
                bias,
                residual,
            });
        }

        let (d, e, n) = (mc.d_model, mc.d_inner(), mc.state_dim);
        let mut mamba = Vec::with_capacity(mc.n_layers);
        for _ in 0..mc.n_layers {
            let conv_bound = 1.0 / (mc.conv_width as f64).sqrt();
            let e_bound = 1.0 / (e as f64).sqrt();
            let dt_bias = Tensor::from_fn(&[e], |_| {
                let dt = 10f64.powf(rng.gen_range(-3.0..=-1.0));
                T::from_f64(inv_softplus(dt))
            });
            mamba.push(MambaBlockParams {
                norm_gamma: Tensor::full(&[d], T::one()),
                norm_beta: Tensor::zeros(&[d]),
                in_proj: uniform(rng, &[d, 2 * e], 1.0 / (d as f64).sqrt()),
                conv_weight: uniform(rng, &[e, mc.conv_width], conv_bound),
                conv_bias: uniform(rng, &[e], conv_bound),
                dt_proj: uniform(rng, &[e, e], e_bound),
                dt_bias,
                b_proj: uniform(rng, &[e, n], e_bound),
                c_proj: uniform(rng, &[e, n], e_bound),
                a_log: Tensor::from_fn(&[e, n], |i| T::from_f64(((i % n) as f64 + 1.0).ln())),
                d_skip: Tensor::full(&[e], T::one()),
                out_proj: Tensor::zeros(&[e, d]),
            });
        }

        let head = HeadParams {
            weight: uniform(rng, &[mc.d_model, 2], 1.0 / (mc.d_model as f64).sqrt()),
            bias: Tensor::zeros(&[2]),
        };
        Ok(Self { tcn, mamba, head })
    }

    /// Expected parameter count for `cfg`, computed from the layer shapes.
    pub fn count_for(cfg: &ModelConfig) -> usize {
        let (tc, mc) = (&cfg.tcn, &cfg.mamba);
        let mut total = 0;
        for layer in 0..tc.layers {
            let c_in = if layer == 0 { tc.in_dim } else { tc.hidden_dim };
            total += tc.hidden_dim * c_in * tc.kernel_size + tc.hidden_dim;
            if c_in != tc.hidden_dim {
                total += tc.hidden_dim * c_in + tc.hidden_dim;
            }
        }
        let (d, e, n) = (mc.d_model, mc.d_inner(), mc.state_dim);
        let block = 2 * d + d * 2 * e + e * mc.conv_width + e + e * e + e + 2 * e * n + e * n + e + e * d;
        total + mc.n_layers * block + 2 * d + 2
    }

    pub fn num_params(&self) -> usize {
        self.named().iter().map(|(_, t)| t.numel()).sum()
    }

    /// All tensors with stable dotted names, in a fixed order.
    pub fn named(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (i, l) in self.tcn.iter().enumerate() {
            out.push((format!("tcn.{i}.weight"), &l.weight));
            out.push((format!("tcn.{i}.bias"), &l.bias));
            if let Some(r) = &l.residual {
                out.push((format!("tcn.{i}.res_weight"), &r.weight));
                out.push((format!("tcn.{i}.res_bias"), &r.bias));
            }
        }
        for (i, b) in self.mamba.iter().enumerate() {
            for (name, t) in [
                ("norm_gamma", &b.norm_gamma),
                ("norm_beta", &b.norm_beta),
                ("in_proj", &b.in_proj),
                ("conv_weight", &b.conv_weight),
                ("conv_bias", &b.conv_bias),
                ("dt_proj", &b.dt_proj),
                ("dt_bias", &b.dt_bias),
                ("b_proj", &b.b_proj),
                ("c_proj", &b.c_proj),
                ("a_log", &b.a_log),
                ("d_skip", &b.d_skip),
                ("out_proj", &b.out_proj),
            ] {
                out.push((format!("mamba.{i}.{name}"), t));
            }
        }
        out.push(("head.weight".into(), &self.head.weight));
        out.push(("head.bias".into(), &self.head.bias));
        out
    }

    /// Mutable counterpart of [`ModelParams::named`], same order.
    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = Vec::new();
        for (i, l) in self.tcn.iter_mut().enumerate() {
            out.push((format!("tcn.{i}.weight"), &mut l.weight));
            out.push((format!("tcn.{i}.bias"), &mut l.bias));
            if let Some(r) = &mut l.residual {
                out.push((format!("tcn.{i}.res_weight"), &mut r.weight));
                out.push((format!("tcn.{i}.res_bias"), &mut r.bias));
            }
        }
        for (i, b) in self.mamba.iter_mut().enumerate() {
            for (name, t) in [
                ("norm_gamma", &mut b.norm_gamma),
                ("norm_beta", &mut b.norm_beta),
                ("in_proj", &mut b.in_proj),
                ("conv_weight", &mut b.conv_weight),
                ("conv_bias", &mut b.conv_bias),
                ("dt_proj", &mut b.dt_proj),
                ("dt_bias", &mut b.dt_bias),
                ("b_proj", &mut b.b_proj),
                ("c_proj", &mut b.c_proj),
                ("a_log", &mut b.a_log),
                ("d_skip", &mut b.d_skip),
                ("out_proj", &mut b.out_proj),
            ] {
                out.push((format!("mamba.{i}.{name}"), t));
            }
        }
        out.push(("head.weight".into(), &mut self.head.weight));
        out.push(("head.bias".into(), &mut self.head.bias));
        out
    }

    pub fn all_finite(&self) -> bool {
        self.named().iter().all(|(_, t)| t.all_finite())
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            tcn: self
                .tcn
                .iter()
                .map(|l| TcnLayerParams {
                    weight: l.weight.cast(),
                    bias: l.bias.cast(),
                    residual: l.residual.as_ref().map(|r| Residual {
                        weight: r.weight.cast(),
                        bias: r.bias.cast(),
                    }),
                })
                .collect(),
            mamba: self
                .mamba
                .iter()
                .map(|b| MambaBlockParams {
                    norm_gamma: b.norm_gamma.cast(),
                    norm_beta: b.norm_beta.cast(),
                    in_proj: b.in_proj.cast(),
                    conv_weight: b.conv_weight.cast(),
                    conv_bias: b.conv_bias.cast(),
                    dt_proj: b.dt_proj.cast(),
                    dt_bias: b.dt_bias.cast(),
                    b_proj: b.b_proj.cast(),
                    c_proj: b.c_proj.cast(),
                    a_log: b.a_log.cast(),
                    d_skip: b.d_skip.cast(),
                    out_proj: b.out_proj.cast(),
                })
                .collect(),
            head: HeadParams {
                weight: self.head.weight.cast(),
                bias: self.head.bias.cast(),
            },
        }
    }

    /// Adds each tensor of `grads` (same structure) into the matching `.grad` buffer.
    pub fn accumulate_grads(&mut self, grads: &ModelParams<T>) -> Result<()> {
        let src = grads.named();
        let mut dst = self.named_mut();
        if src.len() != dst.len() {
            return Err(Error::Invariant(format!(
                "gradient structure has {} tensors, parameters have {}",
                src.len(),
                dst.len()
            )));
        }
        for ((name, g), (_, p)) in src.iter().zip(dst.iter_mut()) {
            if g.shape() != p.shape() {
                return Err(Error::CheckpointShape {
                    name: name.clone(),
                    expected: p.shape().to_vec(),
                    found: g.shape().to_vec(),
                });
            }
            p.accumulate_grad(g.data())?;
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for (_, t) in self.named_mut() {
            t.zero_grad();
        }
    }

    pub fn clear_grads(&mut self) {
        for (_, t) in self.named_mut() {
            t.clear_grad();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn count_matches_default_layout_by_hand() {
        let cfg = ModelConfig::default();
        // tcn: first layer 256*1024*15 + 256 plus 1x1 residual 256*1024 + 256,
        // three more at 256*256*15 + 256
        let tcn = 256 * 1024 * 15 + 256 + 256 * 1024 + 256 + 3 * (256 * 256 * 15 + 256);
        // block: norm 512, in_proj 256*512, conv 256*4 + 256, dt 256*256 + 256,
        // B/C 2*256*8, A_log 256*8, D 256, out 256*256
        let block = 512 + 256 * 512 + 1024 + 256 + 65536 + 256 + 4096 + 2048 + 256 + 65536;
        let head = 512 + 2;
        assert_eq!(ModelParams::<f32>::count_for(&cfg), tcn + 4 * block + head);
        let p = ModelParams::<f32>::init(&cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(p.num_params(), tcn + 4 * block + head);
    }

    #[test]
    fn init_invariants() {
        let mut cfg = ModelConfig::with_in_dim(8);
        cfg.tcn.hidden_dim = 16;
        cfg.mamba.d_model = 16;
        let p = ModelParams::<f64>::init(&cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert!(p.all_finite());
        for b in &p.mamba {
            assert!(b.out_proj.data().iter().all(|&v| v == 0.0));
            let row: Vec<f64> = b.a_log.row(0).iter().map(|v| -v.exp()).collect();
            assert_eq!(row.len(), 8);
            for (i, a) in row.iter().enumerate() {
                assert!((a + (i as f64 + 1.0)).abs() < 1e-12);
            }
            for &bias in b.dt_bias.data() {
                let dt = (bias.exp()).ln_1p();
                assert!((1e-3 - 1e-12..=1e-1 + 1e-12).contains(&dt), "{dt}");
            }
        }
        assert_eq!(p.tcn[0].residual.as_ref().unwrap().weight.shape(), &[16, 8, 1]);
        assert!(p.tcn[1].residual.is_none());
    }

    #[test]
    fn names_are_unique_and_ordered_identically() {
        let mut p = ModelParams::<f32>::init(
            &ModelConfig::with_in_dim(4),
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        let names: Vec<String> = p.named().into_iter().map(|(n, _)| n).collect();
        let mut dedup = names.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), names.len());
        let mut_names: Vec<String> = p.named_mut().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, mut_names);
    }
}
