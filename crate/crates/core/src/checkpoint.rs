//! `MVA1` checkpoint files.
//!
//! Layout (little-endian): magic `MVA1`; `u32` length of a UTF-8 config block of
//! `key=value` lines; the block; `u32` tensor count; then per tensor a `u32` name
//! length, the name, a `u32` rank, `rank` `u32` extents and the `f32` data.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, FormatError, Result};
use crate::layers::{Model, ModelConfig, ModelParams};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"MVA1";

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Checkpoint {
    pub config: BTreeMap<String, String>,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(FormatError::Truncated {
                expected: self.pos.saturating_add(len),
                found: self.bytes.len(),
            });
        };
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn utf8(&mut self, len: usize) -> Result<&'a str, FormatError> {
        std::str::from_utf8(self.take(len)?)
            .map_err(|e| FormatError::Header(format!("invalid UTF-8: {e}")))
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

impl Checkpoint {
    pub fn from_model(model: &Model<f32>) -> Self {
        Self {
            config: model.config.to_pairs().into_iter().collect(),
            tensors: model
                .params
                .named()
                .into_iter()
                .map(|(n, t)| {
                    let mut t = t.clone();
                    t.clear_grad();
                    (n, t)
                })
                .collect(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        let config: String = self
            .config
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect();
        put_u32(&mut out, config.len());
        out.extend_from_slice(config.as_bytes());
        put_u32(&mut out, self.tensors.len());
        for (name, t) in &self.tensors {
            put_u32(&mut out, name.len());
            out.extend_from_slice(name.as_bytes());
            put_u32(&mut out, t.shape().len());
            for &d in t.shape() {
                put_u32(&mut out, d);
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, FormatError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic: [u8; 4] = r.take(4)?.try_into().expect("4 bytes");
        if magic != CHECKPOINT_MAGIC {
            return Err(FormatError::BadMagic {
                expected: CHECKPOINT_MAGIC,
                found: magic,
            });
        }
        let config_len = r.u32()? as usize;
        let mut config = BTreeMap::new();
        for line in r.utf8(config_len)?.lines().filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| FormatError::Header(format!("config line without `=`: {line}")))?;
            config.insert(k.to_string(), v.to_string());
        }
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = r.utf8(name_len)?.to_string();
            let rank = r.u32()? as usize;
            if rank > 8 {
                return Err(FormatError::Header(format!("tensor `{name}` has rank {rank}")));
            }
            let shape = (0..rank)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>, _>>()?;
            let numel = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| FormatError::Header(format!("tensor `{name}` too large")))?;
            let raw = r.take(numel.checked_mul(4).ok_or_else(|| {
                FormatError::Header(format!("tensor `{name}` too large"))
            })?)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            let t = Tensor::new(&shape, data).expect("numel computed from shape");
            tensors.push((name, t));
        }
        if r.pos != bytes.len() {
            return Err(FormatError::Trailing(bytes.len() - r.pos));
        }
        Ok(Self { config, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes).map_err(|kind| Error::Format {
            path: path.to_path_buf(),
            kind,
        })
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        ModelConfig::from_pairs(&self.config)
    }

    /// Copies every parameter tensor into `params`, checking names and shapes.
    pub fn load_params(&self, params: &mut ModelParams<f32>) -> Result<()> {
        for (name, dst) in params.named_mut() {
            let src = self
                .tensor(&name)
                .ok_or_else(|| Error::MissingTensor(name.clone()))?;
            if src.shape() != dst.shape() {
                return Err(Error::CheckpointShape {
                    name,
                    expected: dst.shape().to_vec(),
                    found: src.shape().to_vec(),
                });
            }
            dst.data_mut().copy_from_slice(src.data());
            dst.clear_grad();
        }
        Ok(())
    }

    /// Builds a model from `config` (or the stored config) and loads the weights.
    pub fn to_model(&self, config: Option<ModelConfig>) -> Result<Model<f32>> {
        let config = match config {
            Some(c) => c,
            None => self.model_config()?,
        };
        config.validate()?;
        let mut params = zeros_for(&config)?;
        self.load_params(&mut params)?;
        Ok(Model { config, params })
    }
}

/// Parameters with the right shapes for `config`; values are placeholders.
fn zeros_for(config: &ModelConfig) -> Result<ModelParams<f32>> {
    use rand::SeedableRng;
    let mut p = ModelParams::init(config, &mut rand_chacha::ChaCha8Rng::seed_from_u64(0))?;
    for (_, t) in p.named_mut() {
        t.data_mut().fill(0.0);
    }
    Ok(p)
}
