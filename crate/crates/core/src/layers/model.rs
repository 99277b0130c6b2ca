use rand::Rng;

use super::config::ModelConfig;
use super::head::{head_backward, head_forward, HeadCache};
use super::mamba::{mamba_block_backward, mamba_block_forward, MambaCache};
use super::params::ModelParams;
use super::tcn::{tcn_backward, tcn_forward, TcnCache};
use super::Mode;
use crate::error::Result;
use crate::tensor::{Real, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct Model<T = f32> {
    pub config: ModelConfig,
    pub params: ModelParams<T>,
}

pub struct ModelCache<T> {
    tcn: TcnCache<T>,
    mamba: Vec<MambaCache<T>>,
    head: HeadCache<T>,
}

impl<T: Real> Model<T> {
    pub fn init<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        let params = ModelParams::init(&config, rng)?;
        Ok(Self { config, params })
    }

    /// `features[w x in_dim] -> [w x 2]` (valence, arousal).
    pub fn forward(
        &self,
        features: &Tensor<T>,
        mode: &mut Mode<'_>,
    ) -> Result<(Tensor<T>, ModelCache<T>)> {
        let (mut h, tcn) = tcn_forward(features, &self.params.tcn, &self.config.tcn, mode)?;
        let mut mamba = Vec::with_capacity(self.params.mamba.len());
        for block in &self.params.mamba {
            let (next, cache) = mamba_block_forward(&h, block, &self.config.mamba)?;
            mamba.push(cache);
            h = next;
        }
        let (pred, head) = head_forward(&h, &self.params.head)?;
        Ok((pred, ModelCache { tcn, mamba, head }))
    }

    /// Evaluation-mode forward pass.
    pub fn predict(&self, features: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward(features, &mut Mode::Eval)?.0)
    }

    /// Parameter gradients and input gradient for upstream `grad_pred[w x 2]`.
    pub fn backward(
        &self,
        cache: &ModelCache<T>,
        grad_pred: &Tensor<T>,
    ) -> Result<(ModelParams<T>, Tensor<T>)> {
        let (head, mut g) = head_backward(&self.params.head, &cache.head, grad_pred)?;
        let mut mamba = Vec::with_capacity(self.params.mamba.len());
        for (block, bc) in self.params.mamba.iter().zip(&cache.mamba).rev() {
            let (gp, gx) = mamba_block_backward(block, bc, &g)?;
            mamba.push(gp);
            g = gx;
        }
        mamba.reverse();
        let (tcn, gx) = tcn_backward(&self.params.tcn, &self.config.tcn, &cache.tcn, &g)?;
        Ok((ModelParams { tcn, mamba, head }, gx))
    }
}
