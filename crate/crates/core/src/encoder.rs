//! Ego-neighbor residual encoder.
//!
//! Features are propagated `L` times over the normalized adjacency, every
//! stage (including the unpropagated one) goes through one shared MLP, and
//! the embedding is the concatenation of `Z[l] - Z[0]` for `l = 1..=L`.
//! Propagation has no parameters, so the stages are computed once per
//! dataset and only the MLP runs per step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Parameter, Tape, Var};
use crate::error::{ArcError, Result};
use crate::graph::{laplacian_apply, spmm, SparseGraph};
use crate::tensor::{self, Tensor};

/// How stage representations are combined into the embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EncoderVariant {
    /// `[Z1 - Z0 ‖ … ‖ ZL - Z0]`
    #[default]
    Residual,
    /// `[Z1 ‖ … ‖ ZL]`, used as an ablation baseline.
    RawHops,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub d_u: usize,
    pub hops: usize,
    pub hidden: usize,
    pub mlp_layers: usize,
    pub dropout: f64,
    pub bias: bool,
    pub variant: EncoderVariant,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            d_u: crate::align::DEFAULT_DU,
            hops: 3,
            hidden: 256,
            mlp_layers: 2,
            dropout: 0.2,
            bias: true,
            variant: EncoderVariant::Residual,
        }
    }
}

impl EncoderConfig {
    /// Width of the output embedding, `hops · hidden`.
    pub fn embedding_dim(&self) -> usize {
        self.hops * self.hidden
    }

    /// Checks ranges. Hop counts outside `1..=5` are only accepted when
    /// `allow_wide_hops` is set.
    pub fn validate(&self, allow_wide_hops: bool) -> Result<()> {
        if self.hops == 0 {
            return Err(ArcError::invalid("propagation hops must be at least 1"));
        }
        if self.hops > 5 && !allow_wide_hops {
            return Err(ArcError::invalid(format!(
                "propagation hops {} outside 1..=5",
                self.hops
            )));
        }
        if self.d_u == 0 || self.hidden == 0 || self.mlp_layers == 0 {
            return Err(ArcError::invalid(
                "d_u, hidden and mlp_layers must all be at least 1",
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ArcError::invalid(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpLayer {
    pub weight: Parameter,
    pub bias: Option<Parameter>,
}

/// The single MLP shared by every propagation stage.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub layers: Vec<MlpLayer>,
}

impl EncoderParams {
    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(cfg: &EncoderConfig, rng: &mut R) -> Self {
        let mut layers = Vec::with_capacity(cfg.mlp_layers);
        let mut fan_in = cfg.d_u;
        for i in 0..cfg.mlp_layers {
            let fan_out = cfg.hidden;
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let weight = Parameter::new(
                format!("encoder.mlp.{i}.weight"),
                Tensor::uniform(fan_in, fan_out, -a, a, rng),
            );
            let bias = cfg
                .bias
                .then(|| Parameter::new(format!("encoder.mlp.{i}.bias"), Tensor::zeros(1, fan_out)));
            layers.push(MlpLayer { weight, bias });
            fan_in = fan_out;
        }
        EncoderParams { layers }
    }

    /// A single bias-free linear layer, `Z = X·W`.
    pub fn linear(weight: Tensor) -> Self {
        EncoderParams {
            layers: vec![MlpLayer {
                weight: Parameter::new("encoder.mlp.0.weight", weight),
                bias: None,
            }],
        }
    }

    pub fn parameters(&self) -> Vec<&Parameter> {
        self.layers
            .iter()
            .flat_map(|l| std::iter::once(&l.weight).chain(l.bias.as_ref()))
            .collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        self.layers
            .iter_mut()
            .flat_map(|l| std::iter::once(&mut l.weight).chain(l.bias.as_mut()))
            .collect()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weight.value().cols())
    }
}

/// `[X, ÃX, …, Ã^L X]`
pub fn propagate(g_norm: &SparseGraph, x0: &Tensor, hops: usize) -> Result<Vec<Tensor>> {
    if hops == 0 {
        return Err(ArcError::invalid("propagation hops must be at least 1"));
    }
    let mut stages = Vec::with_capacity(hops + 1);
    stages.push(x0.clone());
    for l in 0..hops {
        let next = spmm(g_norm, &stages[l])?;
        stages.push(next);
    }
    Ok(stages)
}

fn stack_rows(stages: &[Tensor], rows: Option<&[usize]>) -> Result<Tensor> {
    let cols = stages[0].cols();
    let mut data = Vec::new();
    let mut count = 0;
    for s in stages {
        if s.cols() != cols || s.rows() != stages[0].rows() {
            return Err(ArcError::dim(
                "encode",
                format!("stage {:?} vs {:?}", s.shape(), stages[0].shape()),
            ));
        }
        let picked = match rows {
            Some(idx) => s.select_rows(idx)?,
            None => s.clone(),
        };
        count += picked.rows();
        data.extend(picked.into_vec());
    }
    Tensor::from_vec(count, cols, data)
}

/// Records the encoder on `tape`. Parameters are registered with ids
/// `first_id, first_id + 1, …` in [`EncoderParams::parameters`] order.
/// `rows` restricts the embedding to a subset of nodes (the MLP is
/// row-wise, so this equals selecting rows of the full embedding).
#[allow(clippy::too_many_arguments)]
pub fn encode_on_tape(
    tape: &mut Tape,
    stages: &[Tensor],
    params: &EncoderParams,
    variant: EncoderVariant,
    rows: Option<&[usize]>,
    first_id: usize,
    dropout: f64,
    train: bool,
    seed: u64,
) -> Result<Var> {
    if stages.len() < 2 {
        return Err(ArcError::invalid(format!(
            "encoder needs at least 2 stages, got {}",
            stages.len()
        )));
    }
    let m = rows.map_or(stages[0].rows(), <[usize]>::len);
    let stacked = stack_rows(stages, rows)?;
    let mut x = tape.constant(stacked);
    let mut id = first_id;
    let mut mask_rng = ChaCha8Rng::seed_from_u64(seed);
    let last = params.layers.len() - 1;
    for (i, layer) in params.layers.iter().enumerate() {
        let w = tape.param(id, &layer.weight);
        id += 1;
        x = tape.matmul(x, w)?;
        if let Some(b) = &layer.bias {
            let b = tape.param(id, b);
            id += 1;
            x = tape.add_row(x, b)?;
        }
        if i < last {
            x = tape.relu(x);
            x = tape.dropout(x, dropout, mask_rng.random(), train)?;
        }
    }

    let stage = |tape: &mut Tape, l: usize| -> Result<Var> {
        let idx: Vec<usize> = (l * m..(l + 1) * m).collect();
        tape.select_rows(x, &idx)
    };
    let z0 = stage(tape, 0)?;
    let mut parts = Vec::with_capacity(stages.len() - 1);
    for l in 1..stages.len() {
        let zl = stage(tape, l)?;
        parts.push(match variant {
            EncoderVariant::Residual => tape.sub(zl, z0)?,
            EncoderVariant::RawHops => zl,
        });
    }
    tape.concat_cols(&parts)
}

/// Embeddings for every node, without gradients.
pub fn encode(
    stages: &[Tensor],
    params: &EncoderParams,
    variant: EncoderVariant,
    dropout: f64,
    train: bool,
    seed: u64,
) -> Result<Tensor> {
    let mut tape = Tape::new();
    let h = encode_on_tape(&mut tape, stages, params, variant, None, 0, dropout, train, seed)?;
    Ok(tape.value(h).clone())
}

/// Largest deviation between the first residual of a linear encoder,
/// `ÃXW - XW`, and the Laplacian form `-(I - Ã)XW`.
pub fn laplacian_identity_check(g_norm: &SparseGraph, x: &Tensor, w: &Tensor) -> Result<f64> {
    let stages = propagate(g_norm, x, 1)?;
    let params = EncoderParams::linear(w.clone());
    let r1 = encode(&stages, &params, EncoderVariant::Residual, 0.0, false, 0)?;
    let lap = tensor::matmul(&laplacian_apply(g_norm, x)?, w)?.scale(-1.0);
    Ok(r1.max_abs_diff(&lap))
}
