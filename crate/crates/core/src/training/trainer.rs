use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::config::{lr_schedule, TrainConfig};
use super::loss::{ccc_loss, LossOutcome};
use super::optimizer::{clip_grad_norm, AdamW, AdamWConfig};
use crate::checkpoint::Checkpoint;
use crate::data::{merge_overlapping_predictions, Dataset, FeatureSequence, Fold, SegmentBatch, Video};
use crate::error::{Error, Result};
use crate::layers::{Mode, Model, ModelConfig, ModelParams};
use crate::metrics::{evaluate, EvalReport};
use crate::rng::SeedStreams;
use crate::tensor::Tensor;

pub const TRAIN_LOG_HEADER: &str = "epoch,loss,lr,ccc_v,ccc_a,p_va";

const STATE_EPOCH: &str = "state.epoch";
const STATE_STEP: &str = "state.step";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean CCC loss over the optimizer steps that were not skipped.
    pub loss: f64,
    pub lr: f64,
    pub ccc_v: f64,
    pub ccc_a: f64,
    pub p_va: f64,
    pub skipped_batches: usize,
}

impl EpochLog {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.epoch, self.loss, self.lr, self.ccc_v, self.ccc_a, self.p_va
        )
    }
}

/// One training window with its labels; `mask[t]` is false on padding and on
/// frames without a valid annotation.
#[derive(Clone, Debug)]
struct TrainSegment {
    features: Tensor<f32>,
    target: Tensor<f32>,
    mask: Vec<bool>,
}

fn segments_of(videos: &[&Video], window: usize, stride: usize) -> Result<Vec<TrainSegment>> {
    let mut out = Vec::new();
    for video in videos {
        let batch = SegmentBatch::from_sequence(&video.features, window, stride)?;
        let labels = &video.labels;
        for (features, r) in batch.features.into_iter().zip(&batch.ranges) {
            let mut target = vec![0f32; 2 * window];
            let mut mask = vec![false; window];
            for t in 0..r.len {
                let f = r.start + t;
                if labels.valid[f] {
                    target[2 * t] = labels.valence[f];
                    target[2 * t + 1] = labels.arousal[f];
                    mask[t] = true;
                }
            }
            out.push(TrainSegment {
                features,
                target: Tensor::new(&[window, 2], target)?,
                mask,
            });
        }
    }
    Ok(out)
}

/// Runs `model` over overlapping windows of `seq` and averages the overlaps
/// back onto its frames, giving `[n x 2]`.
pub fn predict_sequence(
    model: &Model<f32>,
    seq: &FeatureSequence,
    window: usize,
    stride: usize,
) -> Result<Tensor<f32>> {
    let batch = SegmentBatch::from_sequence(seq, window, stride)?;
    let outputs = batch
        .features
        .iter()
        .map(|f| model.predict(f))
        .collect::<Result<Vec<_>>>()?;
    merge_overlapping_predictions(&outputs, &batch.ranges, seq.n_frames())
}

/// Validation report of `model` on `videos` (CCC over all their valid frames).
pub fn evaluate_videos(
    model: &Model<f32>,
    videos: &[&Video],
    window: usize,
    stride: usize,
) -> Result<EvalReport> {
    let preds = videos
        .iter()
        .map(|v| predict_sequence(model, &v.features, window, stride))
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<_> = preds.iter().zip(videos).map(|(p, v)| (p, &v.labels)).collect();
    evaluate(&pairs)
}

/// Model, optimizer and position in the schedule.
pub struct Trainer {
    pub model: Model<f32>,
    pub config: TrainConfig,
    pub optimizer: AdamW,
    /// Next epoch to run.
    pub epoch: usize,
    streams: SeedStreams,
    pool: Option<rayon::ThreadPool>,
}

fn adamw_config(cfg: &TrainConfig) -> AdamWConfig {
    AdamWConfig {
        beta1: cfg.beta1,
        beta2: cfg.beta2,
        eps: cfg.adam_eps,
        weight_decay: cfg.weight_decay,
    }
}

fn build_pool(workers: usize) -> Result<Option<rayon::ThreadPool>> {
    if workers <= 1 {
        return Ok(None);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map(Some)
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))
}

impl Trainer {
    pub fn new(model_config: ModelConfig, config: TrainConfig) -> Result<Self> {
        model_config.validate()?;
        config.validate()?;
        let streams = SeedStreams::new(config.seed);
        let model = Model::init(model_config, &mut streams.stream("init"))?;
        Self::from_model(model, config)
    }

    pub fn from_model(model: Model<f32>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            optimizer: AdamW::new(adamw_config(&config), &model.params),
            streams: SeedStreams::new(config.seed),
            pool: build_pool(config.workers)?,
            model,
            config,
            epoch: 0,
        })
    }

    fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        match &self.pool {
            Some(pool) => pool.install(f),
            None => f(),
        }
    }

    /// Forward, loss and backward for one batch. Returns `None` when the batch
    /// is skipped; otherwise the loss and the summed parameter gradients.
    fn batch_gradients(
        &self,
        batch: &[(usize, &TrainSegment)],
        epoch: usize,
    ) -> Result<Option<(f64, Vec<ModelParams<f32>>)>> {
        let model = &self.model;
        let streams = self.streams;
        let parallel = self.pool.is_some();
        let forward = |&(pos, seg): &(usize, &TrainSegment)| {
            let mut rng = streams.indexed("dropout", ((epoch as u64) << 32) | pos as u64);
            model.forward(&seg.features, &mut Mode::Train(&mut rng))
        };
        let outs: Vec<_> = self.install(|| {
            if parallel {
                batch.par_iter().map(forward).collect::<Result<Vec<_>>>()
            } else {
                batch.iter().map(forward).collect::<Result<Vec<_>>>()
            }
        })?;

        let w = self.config.window;
        let mut pred = Vec::with_capacity(batch.len() * 2 * w);
        let mut target = Vec::with_capacity(batch.len() * 2 * w);
        let mut mask = Vec::with_capacity(batch.len() * w);
        for ((p, _), (_, seg)) in outs.iter().zip(batch) {
            pred.extend_from_slice(p.data());
            target.extend_from_slice(seg.target.data());
            mask.extend_from_slice(&seg.mask);
        }
        let rows = mask.len();
        let loss = match ccc_loss(
            &Tensor::new(&[rows, 2], pred)?,
            &Tensor::new(&[rows, 2], target)?,
            &mask,
        )? {
            LossOutcome::Skip => return Ok(None),
            LossOutcome::Value(l) => l,
        };

        let grads: Vec<Tensor<f32>> = loss
            .grad
            .data()
            .chunks(2 * w)
            .map(|c| Tensor::new(&[w, 2], c.to_vec()))
            .collect::<Result<_>>()?;
        let backward = |((_, cache), g): (&(Tensor<f32>, _), &Tensor<f32>)| {
            model.backward(cache, g).map(|(gp, _)| gp)
        };
        let param_grads = self.install(|| {
            if parallel {
                outs.par_iter().zip(&grads).map(backward).collect::<Result<Vec<_>>>()
            } else {
                outs.iter().zip(&grads).map(backward).collect::<Result<Vec<_>>>()
            }
        })?;
        Ok(Some((loss.loss, param_grads)))
    }

    /// One pass over the training videos. Returns the mean loss and the number
    /// of skipped batches.
    pub fn train_epoch(&mut self, videos: &[&Video]) -> Result<(f64, usize)> {
        let epoch = self.epoch;
        let segments = segments_of(videos, self.config.window, self.config.stride)?;
        if segments.is_empty() {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        let mut order: Vec<usize> = (0..segments.len()).collect();
        order.shuffle(&mut self.streams.indexed("shuffle", epoch as u64));
        let lr = lr_schedule(epoch, &self.config);

        let (mut total, mut steps, mut skipped) = (0.0, 0usize, 0usize);
        for (b, chunk) in order.chunks(self.config.batch_size).enumerate() {
            let batch: Vec<(usize, &TrainSegment)> = chunk
                .iter()
                .enumerate()
                .map(|(i, &s)| (b * self.config.batch_size + i, &segments[s]))
                .collect();
            let Some((loss, grads)) = self.batch_gradients(&batch, epoch)? else {
                skipped += 1;
                continue;
            };
            let params = &mut self.model.params;
            params.zero_grads();
            for g in &grads {
                params.accumulate_grads(g)?;
            }
            if let Some(max) = self.config.clip_norm {
                clip_grad_norm(params, max);
            }
            self.optimizer.step(params, lr)?;
            params.clear_grads();
            total += loss;
            steps += 1;
        }
        if steps == 0 {
            return Err(Error::Invariant(format!(
                "every batch of epoch {epoch} was degenerate; nothing to learn from"
            )));
        }
        self.epoch += 1;
        Ok((total / steps as f64, skipped))
    }

    pub fn validate(&self, videos: &[&Video]) -> Result<EvalReport> {
        evaluate_videos(&self.model, videos, self.config.window, self.config.stride)
    }

    /// Trains one epoch, then scores the validation videos.
    pub fn run_epoch(&mut self, train: &[&Video], val: &[&Video]) -> Result<EpochLog> {
        let epoch = self.epoch;
        let lr = lr_schedule(epoch, &self.config);
        let (loss, skipped_batches) = self.train_epoch(train)?;
        let report = self.validate(val)?;
        Ok(EpochLog {
            epoch,
            loss,
            lr,
            ccc_v: report.valence.ccc,
            ccc_a: report.arousal.ccc,
            p_va: report.p_va,
            skipped_batches,
        })
    }

    /// Everything needed to continue training exactly where this trainer is.
    pub fn state_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::from_model(&self.model);
        ck.config.extend(self.config.to_pairs());
        ck.config.insert(STATE_EPOCH.into(), self.epoch.to_string());
        ck.config.insert(STATE_STEP.into(), self.optimizer.step.to_string());
        let names: Vec<String> = self.model.params.named().into_iter().map(|(n, _)| n).collect();
        for (i, (name, t)) in names.iter().zip(self.model.params.named()).enumerate() {
            let shape = t.1.shape();
            let m = Tensor::new(shape, self.optimizer.m[i].clone()).expect("moment shape");
            let v = Tensor::new(shape, self.optimizer.v[i].clone()).expect("moment shape");
            ck.tensors.push((format!("adam.m.{name}"), m));
            ck.tensors.push((format!("adam.v.{name}"), v));
        }
        ck
    }

    /// Restores a trainer from [`Trainer::state_checkpoint`]. `overrides` are
    /// applied to the stored training configuration (e.g. a larger `epochs`).
    pub fn from_state_checkpoint(
        ck: &Checkpoint,
        overrides: &BTreeMap<String, String>,
    ) -> Result<Self> {
        let model = ck.to_model(None)?;
        let mut config = TrainConfig::default();
        config.apply_pairs(&ck.config)?;
        config.apply_pairs(overrides)?;
        let state = |key: &str| -> Result<u64> {
            ck.config
                .get(key)
                .ok_or_else(|| Error::MissingTensor(key.to_string()))?
                .parse()
                .map_err(|_| Error::Config(format!("invalid `{key}` in checkpoint")))
        };
        let epoch = state(STATE_EPOCH)? as usize;
        let step = state(STATE_STEP)?;
        let mut trainer = Self::from_model(model, config)?;
        trainer.epoch = epoch;
        trainer.optimizer.step = step;
        let names: Vec<String> = trainer.model.params.named().into_iter().map(|(n, _)| n).collect();
        for (i, name) in names.iter().enumerate() {
            for (prefix, buf) in [("adam.m", &mut trainer.optimizer.m[i]), ("adam.v", &mut trainer.optimizer.v[i])] {
                let key = format!("{prefix}.{name}");
                let t = ck.tensor(&key).ok_or_else(|| Error::MissingTensor(key.clone()))?;
                if t.numel() != buf.len() {
                    return Err(Error::CheckpointShape {
                        name: key,
                        expected: vec![buf.len()],
                        found: t.shape().to_vec(),
                    });
                }
                buf.copy_from_slice(t.data());
            }
        }
        Ok(trainer)
    }
}

pub struct FitResult {
    /// Weights from the epoch with the highest validation P_VA.
    pub best: Model<f32>,
    pub best_epoch: usize,
    pub best_report: EpochLog,
    pub log: Vec<EpochLog>,
    /// State after the last epoch, for resuming.
    pub trainer: Trainer,
}

/// Trains a fresh model on `fold.train` and keeps the best epoch on `fold.val`.
pub fn fit(
    dataset: &Dataset,
    fold: &Fold,
    model_config: ModelConfig,
    config: TrainConfig,
) -> Result<FitResult> {
    fit_from(Trainer::new(model_config, config)?, dataset, fold, |_| {})
}

/// Runs `trainer` from its current epoch to `config.epochs`, calling
/// `on_epoch` after every epoch.
pub fn fit_from(
    mut trainer: Trainer,
    dataset: &Dataset,
    fold: &Fold,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<FitResult> {
    let train = dataset.select(&fold.train)?;
    let val = dataset.select(&fold.val)?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::InsufficientData {
            needed: 1,
            got: train.len().min(val.len()),
        });
    }
    if trainer.epoch >= trainer.config.epochs {
        return Err(Error::Config(format!(
            "trainer is at epoch {} of {}; nothing left to run",
            trainer.epoch, trainer.config.epochs
        )));
    }
    let mut log = Vec::new();
    let mut best: Option<(Model<f32>, EpochLog)> = None;
    while trainer.epoch < trainer.config.epochs {
        let entry = trainer.run_epoch(&train, &val)?;
        log::info!(
            "epoch {} loss {:.4} lr {:.2e} val ccc_v {:.4} ccc_a {:.4} p_va {:.4}",
            entry.epoch,
            entry.loss,
            entry.lr,
            entry.ccc_v,
            entry.ccc_a,
            entry.p_va
        );
        on_epoch(&entry);
        if best.as_ref().is_none_or(|(_, b)| entry.p_va > b.p_va) {
            best = Some((trainer.model.clone(), entry));
        }
        log.push(entry);
    }
    let (best, best_report) = best.expect("at least one epoch ran");
    Ok(FitResult {
        best,
        best_epoch: best_report.epoch,
        best_report,
        log,
        trainer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{SyntheticConfig, SyntheticGenerator, VaSeries};

    fn tiny_setup() -> (Dataset, Fold, ModelConfig, TrainConfig) {
        let gen = SyntheticGenerator::new(SyntheticConfig {
            n_videos: 4,
            min_frames: 40,
            max_frames: 60,
            dim: 4,
            ..SyntheticConfig::default()
        })
        .unwrap();
        let videos = (0..4)
            .map(|i| {
                let features = gen.features(i);
                let labels = gen.labels(&features).unwrap();
                Video { features, labels }
            })
            .collect();
        let ds = Dataset::new(videos).unwrap();
        let ids = ds.ids();
        let fold = Fold {
            index: 0,
            train: ids[..3].to_vec(),
            val: ids[3..].to_vec(),
        };
        let mut mc = ModelConfig::with_in_dim(4);
        mc.tcn.hidden_dim = 8;
        mc.mamba.d_model = 8;
        mc.tcn.layers = 2;
        mc.tcn.kernel_size = 3;
        mc.tcn.dilations = vec![1, 2];
        mc.mamba.n_layers = 1;
        mc.mamba.state_dim = 2;
        let tc = TrainConfig {
            epochs: 4,
            warmup_epochs: 1,
            batch_size: 2,
            window: 16,
            stride: 12,
            lr: 1e-3,
            ..TrainConfig::default()
        };
        (ds, fold, mc, tc)
    }

    #[test]
    fn same_seed_same_trajectory() {
        let (ds, fold, mc, tc) = tiny_setup();
        let a = fit(&ds, &fold, mc.clone(), tc.clone()).unwrap();
        let b = fit(&ds, &fold, mc, tc).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.best, b.best);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let (ds, fold, mc, tc) = tiny_setup();
        let a = fit(&ds, &fold, mc.clone(), tc.clone()).unwrap();
        let b = fit(&ds, &fold, mc, TrainConfig { workers: 3, ..tc }).unwrap();
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn resume_continues_bit_exactly() {
        let (ds, fold, mc, tc) = tiny_setup();
        let full = fit(&ds, &fold, mc.clone(), tc.clone()).unwrap();
        let first = fit(&ds, &fold, mc, TrainConfig { epochs: 2, ..tc.clone() }).unwrap();
        let bytes = first.trainer.state_checkpoint().encode();
        let ck = Checkpoint::decode(&bytes).unwrap();
        let overrides = BTreeMap::from([("epochs".to_string(), "4".to_string())]);
        let resumed = Trainer::from_state_checkpoint(&ck, &overrides).unwrap();
        let rest = fit_from(resumed, &ds, &fold, |_| {}).unwrap();
        assert_eq!(first.log, full.log[..2]);
        assert_eq!(rest.log, full.log[2..]);
        assert_eq!(rest.trainer.model, full.trainer.model);
    }

    #[test]
    fn all_degenerate_batches_is_an_error() {
        let (ds, fold, mc, tc) = tiny_setup();
        let flat: Vec<Video> = ds
            .videos()
            .iter()
            .map(|v| Video {
                features: v.features.clone(),
                labels: VaSeries::from_pairs(&vec![(0.1, 0.2); v.labels.len()]),
            })
            .collect();
        let ds = Dataset::new(flat).unwrap();
        assert!(matches!(fit(&ds, &fold, mc, tc), Err(Error::Invariant(_))));
    }
}
