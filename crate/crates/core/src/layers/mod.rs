//! Model architecture: a dilated causal TCN, a cascade of selective-SSM blocks and
//! a `tanh`-bounded two-output head.

mod config;
mod head;
mod mamba;
mod model;
mod params;
mod tcn;

pub use config::{MambaConfig, ModelConfig, TcnConfig};
pub use head::{head_backward, head_forward, HeadCache};
pub use mamba::{mamba_block_backward, mamba_block_forward, MambaCache};
pub use model::{Model, ModelCache};
pub use params::{HeadParams, MambaBlockParams, ModelParams, Residual, TcnLayerParams};
pub use tcn::{tcn_backward, tcn_forward, TcnCache};

use rand::RngCore;

/// Whether dropout is active. Training mode carries the RNG that draws masks.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut dyn RngCore),
}

impl Mode<'_> {
    pub fn is_training(&self) -> bool {
        matches!(self, Mode::Train(_))
    }
}

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub(crate) fn split_cols<T: Real>(x: &Tensor<T>, at: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let (rows, cols) = x.dims2()?;
    if at > cols {
        return Err(Error::shape("split_cols", x.shape(), &[at]));
    }
    let mut left = Vec::with_capacity(rows * at);
    let mut right = Vec::with_capacity(rows * (cols - at));
    for row in x.data().chunks(cols) {
        left.extend_from_slice(&row[..at]);
        right.extend_from_slice(&row[at..]);
    }
    Ok((
        Tensor::new(&[rows, at], left)?,
        Tensor::new(&[rows, cols - at], right)?,
    ))
}

pub(crate) fn concat_cols<T: Real>(left: &Tensor<T>, right: &Tensor<T>) -> Result<Tensor<T>> {
    let (rows, lc) = left.dims2()?;
    let (rr, rc) = right.dims2()?;
    if rows != rr {
        return Err(Error::shape("concat_cols", left.shape(), right.shape()));
    }
    let mut out = Vec::with_capacity(rows * (lc + rc));
    for r in 0..rows {
        out.extend_from_slice(left.row(r));
        out.extend_from_slice(right.row(r));
    }
    Tensor::new(&[rows, lc + rc], out)
}

pub(crate) fn add<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    a.zip_map(b, |x, y| x + y)
}

pub(crate) fn mul<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    a.zip_map(b, |x, y| x * y)
}
