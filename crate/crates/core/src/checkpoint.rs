//! Model checkpoints as a single UTF-8 JSON document.
//!
//! Parameter arrays are stored as whitespace-separated decimal text with 17
//! significant digits, which round-trips every `f64` exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autograd::Parameter;
use crate::config::TrainConfig;
use crate::encoder::{EncoderParams, MlpLayer};
use crate::error::{ArcError, Result};
use crate::scorer::ScorerParams;
use crate::tensor::Tensor;

pub const CHECKPOINT_FORMAT: &str = "arc-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: usize,
    pub steps: u64,
    /// Mean loss over the training datasets, one entry per epoch.
    pub epoch_loss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub encoder: EncoderParams,
    pub scorer: ScorerParams,
    pub log: TrainingLog,
}

#[derive(Serialize, Deserialize)]
struct ParamRecord {
    name: String,
    rows: usize,
    cols: usize,
    values: String,
}

#[derive(Serialize, Deserialize)]
struct Document {
    format: String,
    version: u32,
    config: TrainConfig,
    params: Vec<ParamRecord>,
    log: TrainingLog,
}

fn encode_values(t: &Tensor) -> String {
    let parts: Vec<String> = t.data().iter().map(|v| format!("{v:.16e}")).collect();
    parts.join(" ")
}

fn record(p: &Parameter) -> ParamRecord {
    ParamRecord {
        name: p.name().to_string(),
        rows: p.value().rows(),
        cols: p.value().cols(),
        values: encode_values(p.value()),
    }
}

fn decode(rec: &ParamRecord) -> Result<Parameter> {
    let values = rec
        .values
        .split_ascii_whitespace()
        .map(|tok| {
            tok.parse::<f64>().map_err(|_| {
                ArcError::invalid(format!("checkpoint: bad value {tok:?} in {}", rec.name))
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(Parameter::new(
        rec.name.clone(),
        Tensor::from_vec(rec.rows, rec.cols, values)?,
    ))
}

impl Checkpoint {
    pub fn parameters(&self) -> Vec<&Parameter> {
        let mut all = self.encoder.parameters();
        all.extend(self.scorer.parameters());
        all
    }

    pub fn to_text(&self) -> String {
        let doc = Document {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            params: self.parameters().into_iter().map(record).collect(),
            log: self.log.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("checkpoint serializes") + "\n"
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let doc: Document = serde_json::from_str(text)
            .map_err(|e| ArcError::invalid(format!("checkpoint: {e}")))?;
        if doc.format != CHECKPOINT_FORMAT || doc.version != CHECKPOINT_VERSION {
            return Err(ArcError::invalid(format!(
                "checkpoint: unsupported format {} v{}",
                doc.format, doc.version
            )));
        }
        doc.config.validate()?;
        let mut by_name: std::collections::HashMap<&str, &ParamRecord> =
            doc.params.iter().map(|r| (r.name.as_str(), r)).collect();
        let mut take = |name: String| -> Result<Parameter> {
            let rec = by_name
                .remove(name.as_str())
                .ok_or_else(|| ArcError::invalid(format!("checkpoint: missing parameter {name}")))?;
            decode(rec)
        };

        let cfg = &doc.config;
        let mut layers = Vec::with_capacity(cfg.mlp_layers);
        for i in 0..cfg.mlp_layers {
            let weight = take(format!("encoder.mlp.{i}.weight"))?;
            let bias = if cfg.bias {
                Some(take(format!("encoder.mlp.{i}.bias"))?)
            } else {
                None
            };
            layers.push(MlpLayer { weight, bias });
        }
        let scorer = ScorerParams {
            w_q: take("scorer.w_q".into())?,
            w_k: take("scorer.w_k".into())?,
        };
        if let Some(extra) = by_name.keys().next() {
            return Err(ArcError::invalid(format!("checkpoint: unexpected parameter {extra}")));
        }
        let ckpt = Checkpoint {
            config: doc.config,
            encoder: EncoderParams { layers },
            scorer,
            log: doc.log,
        };
        ckpt.check_shapes()?;
        Ok(ckpt)
    }

    /// Verifies parameter shapes against the stored config.
    pub fn check_shapes(&self) -> Result<()> {
        let cfg = &self.config;
        let mut fan_in = cfg.d_u;
        for layer in &self.encoder.layers {
            let want = (fan_in, cfg.hidden);
            if layer.weight.value().shape() != want {
                return Err(ArcError::dim(
                    "checkpoint",
                    format!("{} is {:?}, expected {want:?}", layer.weight.name(), layer.weight.value().shape()),
                ));
            }
            if let Some(b) = &layer.bias {
                if b.value().shape() != (1, cfg.hidden) {
                    return Err(ArcError::dim("checkpoint", format!("{} has the wrong shape", b.name())));
                }
            }
            fan_in = cfg.hidden;
        }
        let d_e = cfg.embedding_dim();
        for p in self.scorer.parameters() {
            if p.value().shape() != (d_e, d_e) {
                return Err(ArcError::dim(
                    "checkpoint",
                    format!("{} is {:?}, expected {d_e}x{d_e}", p.name(), p.value().shape()),
                ));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| ArcError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ArcError::io(path, e))?;
        Self::from_text(&text)
    }
}
