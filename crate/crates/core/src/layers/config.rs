use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::scan::ScanVariant;

#[derive(Clone, Debug, PartialEq)]
pub struct TcnConfig {
    pub in_dim: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    pub kernel_size: usize,
    pub dilations: Vec<usize>,
    pub dropout: f64,
}

impl Default for TcnConfig {
    fn default() -> Self {
        Self {
            in_dim: 1024,
            hidden_dim: 256,
            layers: 4,
            kernel_size: 15,
            dilations: vec![1, 2, 4, 8],
            dropout: 0.3,
        }
    }
}

impl TcnConfig {
    /// Dilations `1, 2, 4, ...` for `layers` layers.
    pub fn doubling_dilations(layers: usize) -> Vec<usize> {
        (0..layers).map(|i| 1usize << i).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_dim == 0 || self.hidden_dim == 0 || self.layers == 0 {
            return Err(Error::Config(
                "tcn in_dim, hidden_dim and layers must be positive".into(),
            ));
        }
        if self.dilations.len() != self.layers {
            return Err(Error::Config(format!(
                "tcn has {} layers but {} dilations",
                self.layers,
                self.dilations.len()
            )));
        }
        if self.dilations.contains(&0) {
            return Err(Error::Config("tcn dilations must be positive".into()));
        }
        if self.kernel_size == 0 || self.kernel_size.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "tcn kernel_size must be odd and >= 1, got {}",
                self.kernel_size
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }

    /// Number of input frames that can influence one output frame.
    pub fn receptive_field(&self) -> usize {
        1 + self
            .dilations
            .iter()
            .map(|d| (self.kernel_size - 1) * d)
            .sum::<usize>()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MambaConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub state_dim: usize,
    pub conv_width: usize,
    pub expand: usize,
    pub scan: ScanVariant,
}

impl Default for MambaConfig {
    fn default() -> Self {
        Self {
            d_model: 256,
            n_layers: 4,
            state_dim: 8,
            conv_width: 4,
            expand: 1,
            scan: ScanVariant::Sequential,
        }
    }
}

impl MambaConfig {
    pub fn d_inner(&self) -> usize {
        self.expand * self.d_model
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0
            || self.state_dim == 0
            || self.conv_width == 0
            || self.expand == 0
        {
            return Err(Error::Config(
                "mamba d_model, state_dim, conv_width and expand must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
#[derive(Default)]
pub struct ModelConfig {
    pub tcn: TcnConfig,
    pub mamba: MambaConfig,
}


impl ModelConfig {
    /// Full-width model with the given input feature width.
    pub fn with_in_dim(in_dim: usize) -> Self {
        let mut cfg = Self::default();
        cfg.tcn.in_dim = in_dim;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.tcn.validate()?;
        self.mamba.validate()?;
        if self.mamba.d_model != self.tcn.hidden_dim {
            return Err(Error::Config(format!(
                "mamba d_model ({}) must equal tcn hidden_dim ({})",
                self.mamba.d_model, self.tcn.hidden_dim
            )));
        }
        Ok(())
    }

    /// Keys understood by [`ModelConfig::from_pairs`].
    pub const KEYS: &'static [&'static str] = &[
        "in_dim",
        "hidden_dim",
        "tcn_layers",
        "kernel_size",
        "dilations",
        "dropout",
        "mamba_layers",
        "state_dim",
        "conv_width",
        "expand",
        "scan",
    ];

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let dil: Vec<String> = self.tcn.dilations.iter().map(|d| d.to_string()).collect();
        vec![
            ("in_dim".into(), self.tcn.in_dim.to_string()),
            ("hidden_dim".into(), self.tcn.hidden_dim.to_string()),
            ("tcn_layers".into(), self.tcn.layers.to_string()),
            ("kernel_size".into(), self.tcn.kernel_size.to_string()),
            ("dilations".into(), dil.join(",")),
            ("dropout".into(), self.tcn.dropout.to_string()),
            ("mamba_layers".into(), self.mamba.n_layers.to_string()),
            ("state_dim".into(), self.mamba.state_dim.to_string()),
            ("conv_width".into(), self.mamba.conv_width.to_string()),
            ("expand".into(), self.mamba.expand.to_string()),
            ("scan".into(), self.mamba.scan.to_string()),
        ]
    }

    /// Applies any model keys present in `pairs` on top of `self`. Keys that are
    /// not model keys are ignored. If `tcn_layers` changes and `dilations` is
    /// absent, dilations default to `1, 2, 4, ...`.
    pub fn apply_pairs(&mut self, pairs: &BTreeMap<String, String>) -> Result<()> {
        fn num<V: std::str::FromStr>(key: &str, v: &str) -> Result<V> {
            v.trim()
                .parse()
                .map_err(|_| Error::Config(format!("invalid value `{v}` for `{key}`")))
        }
        for (k, v) in pairs {
            match k.as_str() {
                "in_dim" => self.tcn.in_dim = num(k, v)?,
                "hidden_dim" => {
                    self.tcn.hidden_dim = num(k, v)?;
                    self.mamba.d_model = self.tcn.hidden_dim;
                }
                "tcn_layers" => {
                    self.tcn.layers = num(k, v)?;
                    if !pairs.contains_key("dilations") {
                        self.tcn.dilations = TcnConfig::doubling_dilations(self.tcn.layers);
                    }
                }
                "kernel_size" => self.tcn.kernel_size = num(k, v)?,
                "dilations" => {
                    self.tcn.dilations = v
                        .split(',')
                        .map(|d| num(k, d))
                        .collect::<Result<Vec<usize>>>()?
                }
                "dropout" => self.tcn.dropout = num(k, v)?,
                "mamba_layers" => self.mamba.n_layers = num(k, v)?,
                "state_dim" => self.mamba.state_dim = num(k, v)?,
                "conv_width" => self.mamba.conv_width = num(k, v)?,
                "expand" => self.mamba.expand = num(k, v)?,
                "scan" => self.mamba.scan = v.trim().parse()?,
                _ => {}
            }
        }
        Ok(())
    }

    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_pairs(pairs)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_receptive_field_is_211() {
        assert_eq!(TcnConfig::default().receptive_field(), 211);
    }

    #[test]
    fn defaults_validate() {
        let cfg = ModelConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.mamba.d_inner(), 256);
    }

    #[test]
    fn rejects_even_kernel_and_dilation_count_mismatch() {
        let mut tcn = TcnConfig {
            kernel_size: 4,
            ..TcnConfig::default()
        };
        assert!(tcn.validate().is_err());
        tcn.kernel_size = 15;
        tcn.dilations.pop();
        assert!(tcn.validate().is_err());
    }

    #[test]
    fn pairs_roundtrip() {
        let mut cfg = ModelConfig::with_in_dim(32);
        cfg.tcn.hidden_dim = 64;
        cfg.mamba.d_model = 64;
        cfg.mamba.scan = ScanVariant::Parallel;
        let pairs: BTreeMap<_, _> = cfg.to_pairs().into_iter().collect();
        assert_eq!(ModelConfig::from_pairs(&pairs).unwrap(), cfg);
    }
}
