use std::collections::BTreeMap;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub warmup_epochs: usize,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Segments per optimizer step.
    pub batch_size: usize,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub window: usize,
    pub stride: usize,
    pub seed: u64,
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            lr: 3e-4,
            warmup_epochs: 5,
            weight_decay: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 8,
            clip_norm: Some(1.0),
            window: 300,
            stride: 200,
            seed: 0,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub const KEYS: &'static [&'static str] = &[
        "epochs",
        "lr",
        "warmup_epochs",
        "weight_decay",
        "beta1",
        "beta2",
        "adam_eps",
        "batch_size",
        "clip_norm",
        "window",
        "stride",
        "seed",
        "workers",
    ];

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if self.warmup_epochs >= self.epochs {
            return bad(format!(
                "warmup_epochs ({}) must be smaller than epochs ({})",
                self.warmup_epochs, self.epochs
            ));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be a non-negative number, got {}", self.lr));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must be in [0, 1), got {b}"));
            }
        }
        if self.adam_eps <= 0.0 || self.batch_size == 0 || self.workers == 0 {
            return bad("adam_eps, batch_size and workers must be positive".into());
        }
        if self.clip_norm.is_some_and(|c| c <= 0.0) {
            return bad("clip_norm must be positive (0 disables clipping)".into());
        }
        if self.window == 0 || self.stride == 0 || self.stride > self.window {
            return bad(format!(
                "need 1 <= stride <= window (window={}, stride={})",
                self.window, self.stride
            ));
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        vec![
            ("epochs".into(), self.epochs.to_string()),
            ("lr".into(), self.lr.to_string()),
            ("warmup_epochs".into(), self.warmup_epochs.to_string()),
            ("weight_decay".into(), self.weight_decay.to_string()),
            ("beta1".into(), self.beta1.to_string()),
            ("beta2".into(), self.beta2.to_string()),
            ("adam_eps".into(), self.adam_eps.to_string()),
            ("batch_size".into(), self.batch_size.to_string()),
            ("clip_norm".into(), self.clip_norm.unwrap_or(0.0).to_string()),
            ("window".into(), self.window.to_string()),
            ("stride".into(), self.stride.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("workers".into(), self.workers.to_string()),
        ]
    }

    /// Applies the training keys present in `pairs`; other keys are ignored.
    pub fn apply_pairs(&mut self, pairs: &BTreeMap<String, String>) -> Result<()> {
        fn num<V: std::str::FromStr>(key: &str, v: &str) -> Result<V> {
            v.trim()
                .parse()
                .map_err(|_| Error::Config(format!("invalid value `{v}` for `{key}`")))
        }
        for (k, v) in pairs {
            match k.as_str() {
                "epochs" => self.epochs = num(k, v)?,
                "lr" => self.lr = num(k, v)?,
                "warmup_epochs" => self.warmup_epochs = num(k, v)?,
                "weight_decay" => self.weight_decay = num(k, v)?,
                "beta1" => self.beta1 = num(k, v)?,
                "beta2" => self.beta2 = num(k, v)?,
                "adam_eps" => self.adam_eps = num(k, v)?,
                "batch_size" => self.batch_size = num(k, v)?,
                "clip_norm" => {
                    let c: f64 = num(k, v)?;
                    self.clip_norm = (c != 0.0).then_some(c);
                }
                "window" => self.window = num(k, v)?,
                "stride" => self.stride = num(k, v)?,
                "seed" => self.seed = num(k, v)?,
                "workers" => self.workers = num(k, v)?,
                _ => {}
            }
        }
        Ok(())
    }
}

/// Learning rate for a 0-based `epoch`: a linear ramp `lr * (epoch + 1) / warmup`
/// over the warmup epochs, then constant.
pub fn lr_schedule(epoch: usize, cfg: &TrainConfig) -> f64 {
    if epoch < cfg.warmup_epochs {
        cfg.lr * (epoch + 1) as f64 / cfg.warmup_epochs as f64
    } else {
        cfg.lr
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warmup_ramp() {
        let cfg = TrainConfig::default();
        assert!((lr_schedule(0, &cfg) - 6e-5).abs() < 1e-18);
        assert!((lr_schedule(4, &cfg) - 3e-4).abs() < 1e-18);
        assert_eq!(lr_schedule(49, &cfg), 3e-4);
        assert!(lr_schedule(1, &cfg) < lr_schedule(2, &cfg));
    }

    #[test]
    fn validation() {
        TrainConfig::default().validate().unwrap();
        let bad = TrainConfig {
            warmup_epochs: 50,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            stride: 400,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn pairs_roundtrip() {
        let cfg = TrainConfig {
            clip_norm: None,
            seed: 99,
            ..Default::default()
        };
        let pairs = cfg.to_pairs().into_iter().collect();
        let mut back = TrainConfig::default();
        back.apply_pairs(&pairs).unwrap();
        assert_eq!(back, cfg);
    }
}
