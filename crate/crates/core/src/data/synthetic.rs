//! Seeded stand-in corpus whose labels are a known causal function of the features.
//!
//! Features follow a unit-variance AR(1) process per dimension. Each label is
//! `tanh(gain * <w, ema(features)> + bias)` where the exponential moving average
//! has a per-label smoothing factor and `gain` normalizes the readout to unit
//! stationary variance.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use super::{save_annotations, save_features, FeatureSequence, VaSeries};
use crate::error::{Error, Result};
use crate::rng::SeedStreams;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub n_videos: usize,
    pub min_frames: usize,
    pub max_frames: usize,
    pub dim: usize,
    /// AR(1) coefficient of the feature trajectories.
    pub feature_smoothing: f64,
    pub valence_smoothing: f64,
    pub arousal_smoothing: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_videos: 20,
            min_frames: 400,
            max_frames: 600,
            dim: 32,
            feature_smoothing: 0.9,
            valence_smoothing: 0.8,
            arousal_smoothing: 0.9,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_videos == 0 || self.dim == 0 || self.min_frames == 0 {
            return Err(Error::Config(
                "synthetic videos, dim and min_frames must be positive".into(),
            ));
        }
        if self.min_frames > self.max_frames {
            return Err(Error::Config(format!(
                "min_frames {} exceeds max_frames {}",
                self.min_frames, self.max_frames
            )));
        }
        for s in [
            self.feature_smoothing,
            self.valence_smoothing,
            self.arousal_smoothing,
        ] {
            if !(0.0..1.0).contains(&s) {
                return Err(Error::Config(format!("smoothing factor {s} not in [0, 1)")));
            }
        }
        Ok(())
    }
}

/// Stationary variance of an EMA (factor `beta`) of a unit-variance AR(1)
/// process with coefficient `rho`.
fn ema_variance(rho: f64, beta: f64) -> f64 {
    (1.0 - beta) * (1.0 + rho * beta) / ((1.0 + beta) * (1.0 - rho * beta))
}

#[derive(Clone, Debug)]
pub struct SyntheticGenerator {
    pub config: SyntheticConfig,
    readout: [Vec<f64>; 2],
    bias: [f64; 2],
}

impl SyntheticGenerator {
    pub fn new(config: SyntheticConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = SeedStreams::new(config.seed).stream("synthetic.readout");
        let mut readout = [Vec::new(), Vec::new()];
        let mut bias = [0.0; 2];
        for (label, smoothing) in [config.valence_smoothing, config.arousal_smoothing]
            .into_iter()
            .enumerate()
        {
            let w: Vec<f64> = (0..config.dim)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            let sd = ema_variance(config.feature_smoothing, smoothing).sqrt();
            readout[label] = w.iter().map(|v| v / (norm * sd)).collect();
            bias[label] = rng.gen_range(-0.3..0.3);
        }
        Ok(Self {
            config,
            readout,
            bias,
        })
    }

    pub fn video_id(index: usize) -> String {
        format!("synth_{index:04}")
    }

    /// Features of video `index`.
    pub fn features(&self, index: usize) -> FeatureSequence {
        let c = &self.config;
        let streams = SeedStreams::new(c.seed);
        let mut rng = streams.indexed("synthetic.video", index as u64);
        let n = rng.gen_range(c.min_frames..=c.max_frames);
        let rho = c.feature_smoothing;
        let innovation = (1.0 - rho * rho).sqrt();
        let mut state: Vec<f64> = (0..c.dim)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut data = Vec::with_capacity(n * c.dim);
        for t in 0..n {
            if t > 0 {
                for s in state.iter_mut() {
                    *s = rho * *s + innovation * rng.sample::<f64, _>(StandardNormal);
                }
            }
            data.extend(state.iter().map(|&v| v as f32));
        }
        FeatureSequence {
            video_id: Self::video_id(index),
            data: Tensor::new(&[n, c.dim], data).expect("n x dim buffer"),
        }
    }

    /// The generating function: labels for any feature sequence of the right width.
    pub fn labels(&self, features: &FeatureSequence) -> Result<VaSeries> {
        if features.dim() != self.config.dim {
            return Err(Error::shape(
                "SyntheticGenerator::labels",
                &[self.config.dim],
                &[features.dim()],
            ));
        }
        let smoothing = [self.config.valence_smoothing, self.config.arousal_smoothing];
        let mut ema = [vec![0f64; self.config.dim], vec![0f64; self.config.dim]];
        let mut pairs = Vec::with_capacity(features.n_frames());
        for t in 0..features.n_frames() {
            let row = features.data.row(t);
            let mut out = [0f32; 2];
            for label in 0..2 {
                let beta = smoothing[label];
                let mut dot = 0.0;
                for (j, &x) in row.iter().enumerate() {
                    let x = x as f64;
                    let e = &mut ema[label][j];
                    *e = if t == 0 { x } else { beta * *e + (1.0 - beta) * x };
                    dot += self.readout[label][j] * *e;
                }
                out[label] = (dot + self.bias[label]).tanh() as f32;
            }
            pairs.push((out[0], out[1]));
        }
        Ok(VaSeries::from_pairs(&pairs))
    }

    /// SHA-256 over the readout coefficients and biases.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for w in &self.readout {
            for v in w {
                h.update(v.to_le_bytes());
            }
        }
        for b in self.bias {
            h.update(b.to_le_bytes());
        }
        h.finalize().iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn manifest(&self) -> String {
        let c = &self.config;
        format!(
            "seed={}\nn_videos={}\nmin_frames={}\nmax_frames={}\ndim={}\nfeature_smoothing={}\nvalence_smoothing={}\narousal_smoothing={}\nlabel_function=tanh(readout . ema(features) + bias)\ncoefficients_sha256={}\n",
            c.seed,
            c.n_videos,
            c.min_frames,
            c.max_frames,
            c.dim,
            c.feature_smoothing,
            c.valence_smoothing,
            c.arousal_smoothing,
            self.digest()
        )
    }
}

/// Writes `features/<id>.fvec`, `annotations/<id>.csv` and `manifest.txt` under `out`.
pub fn generate_synthetic_dataset(config: &SyntheticConfig, out: &Path) -> Result<SyntheticGenerator> {
    let generator = SyntheticGenerator::new(config.clone())?;
    let feat_dir = out.join("features");
    let ann_dir = out.join("annotations");
    for d in [&feat_dir, &ann_dir] {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    for i in 0..config.n_videos {
        let features = generator.features(i);
        let labels = generator.labels(&features)?;
        save_features(feat_dir.join(format!("{}.fvec", features.video_id)), &features)?;
        save_annotations(ann_dir.join(format!("{}.csv", features.video_id)), &labels)?;
    }
    let manifest = out.join("manifest.txt");
    std::fs::write(&manifest, generator.manifest()).map_err(|e| Error::io(&manifest, e))?;
    Ok(generator)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticConfig {
        SyntheticConfig {
            n_videos: 3,
            min_frames: 50,
            max_frames: 80,
            dim: 6,
            ..Default::default()
        }
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let a = SyntheticGenerator::new(small()).unwrap();
        let b = SyntheticGenerator::new(small()).unwrap();
        assert_eq!(a.features(1), b.features(1));
        assert_eq!(a.digest(), b.digest());
        let c = SyntheticGenerator::new(SyntheticConfig { seed: 1, ..small() }).unwrap();
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn labels_in_range_and_valid() {
        let g = SyntheticGenerator::new(small()).unwrap();
        for i in 0..3 {
            let f = g.features(i);
            assert!((50..=80).contains(&f.n_frames()));
            let l = g.labels(&f).unwrap();
            assert_eq!(l.n_valid(), l.len());
            assert!(l.valence.iter().chain(&l.arousal).all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn labels_are_causal() {
        let g = SyntheticGenerator::new(small()).unwrap();
        let f = g.features(0);
        let base = g.labels(&f).unwrap();
        let mut g2 = f.clone();
        let n = f.n_frames();
        for v in &mut g2.data.data_mut()[(n - 5) * 6..] {
            *v += 1.0;
        }
        let moved = g.labels(&g2).unwrap();
        assert_eq!(base.valence[..n - 5], moved.valence[..n - 5]);
        assert_ne!(base.valence[n - 1], moved.valence[n - 1]);
    }
}
