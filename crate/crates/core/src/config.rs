use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderConfig, EncoderVariant};
use crate::error::{ArcError, Result};
use crate::optim::AdamConfig;

pub const CONFIG_VERSION: i64 = 1;

/// Everything needed to reproduce a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub d_u: usize,
    /// Propagation iterations `L`.
    pub hops: usize,
    pub hidden: usize,
    pub mlp_layers: usize,
    pub dropout: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Cosine margin for anomalous queries.
    pub margin: f64,
    /// Context nodes per dataset per step.
    pub n_k: usize,
    pub seed: u64,
    pub encoder: EncoderVariant,
    pub bias: bool,
    /// Std of the attention map initialization.
    pub init_std: f64,
    /// Accept hop counts above 5.
    pub allow_wide_hops: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            d_u: 64,
            hops: 3,
            hidden: 256,
            mlp_layers: 2,
            dropout: 0.2,
            lr: 1e-3,
            weight_decay: 1e-5,
            epochs: 200,
            margin: 0.0,
            n_k: 10,
            seed: 0,
            encoder: EncoderVariant::Residual,
            bias: true,
            init_std: crate::scorer::DEFAULT_INIT_STD,
            allow_wide_hops: false,
        }
    }
}

impl TrainConfig {
    pub fn encoder_config(&self) -> EncoderConfig {
        EncoderConfig {
            d_u: self.d_u,
            hops: self.hops,
            hidden: self.hidden,
            mlp_layers: self.mlp_layers,
            dropout: self.dropout,
            bias: self.bias,
            variant: self.encoder,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }

    pub fn embedding_dim(&self) -> usize {
        self.hops * self.hidden
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder_config().validate(self.allow_wide_hops)?;
        if self.n_k == 0 {
            return Err(ArcError::invalid("n_k must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(ArcError::invalid(format!("learning rate {} must be positive", self.lr)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(ArcError::invalid("weight decay must be non-negative"));
        }
        if !(-1.0..=1.0).contains(&self.margin) {
            return Err(ArcError::invalid(format!("margin {} outside [-1, 1]", self.margin)));
        }
        if !(self.init_std >= 0.0 && self.init_std.is_finite()) {
            return Err(ArcError::invalid("init_std must be non-negative"));
        }
        Ok(())
    }

    /// Parses a config document: TOML key/value pairs plus `version = 1`.
    /// Missing keys take their defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| ArcError::invalid(format!("config: {e}")))?;
        match table.remove("version") {
            Some(toml::Value::Integer(CONFIG_VERSION)) => {}
            Some(other) => {
                return Err(ArcError::invalid(format!(
                    "config: unsupported version {other}"
                )))
            }
            None => return Err(ArcError::invalid("config: missing version")),
        }
        let cfg: TrainConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| ArcError::invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        let body = toml::to_string(self).expect("config serializes");
        format!("version = {CONFIG_VERSION}\n{body}")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ArcError::io(path, e))?;
        Self::from_toml_str(&text)
    }
}
