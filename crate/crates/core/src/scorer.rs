//! Cross-attentive in-context scoring.
//!
//! Query embeddings are rebuilt as attention-weighted mixtures of context
//! embeddings (no value projection, so the rebuild lives in the embedding
//! space itself); the L2 distance between a query and its rebuild is the
//! anomaly score. Training uses a marginal cosine loss on the same pair.

use std::collections::HashSet;

use rand::Rng;

use crate::autograd::{Parameter, Tape, Var};
use crate::error::{ArcError, Result};
use crate::tensor::{self, Tensor};

pub const DEFAULT_INIT_STD: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct ScorerParams {
    pub w_q: Parameter,
    pub w_k: Parameter,
}

impl ScorerParams {
    pub fn init<R: Rng + ?Sized>(d_e: usize, std: f64, rng: &mut R) -> Self {
        ScorerParams {
            w_q: Parameter::new("scorer.w_q", Tensor::randn(d_e, d_e, std, rng)),
            w_k: Parameter::new("scorer.w_k", Tensor::randn(d_e, d_e, std, rng)),
        }
    }

    /// All-zero maps: uniform attention, i.e. distance to the context mean.
    pub fn zeros(d_e: usize) -> Self {
        ScorerParams {
            w_q: Parameter::new("scorer.w_q", Tensor::zeros(d_e, d_e)),
            w_k: Parameter::new("scorer.w_k", Tensor::zeros(d_e, d_e)),
        }
    }

    pub fn dim(&self) -> usize {
        self.w_q.value().rows()
    }

    pub fn parameters(&self) -> Vec<&Parameter> {
        vec![&self.w_q, &self.w_k]
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.w_q, &mut self.w_k]
    }
}

/// Disjoint context / query node sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextSplit {
    pub context: Vec<usize>,
    pub query: Vec<usize>,
}

impl ContextSplit {
    /// Context ids as given; queries are every other node in index order.
    /// When labels are supplied every context node must be normal.
    pub fn complement(n: usize, context: &[usize], labels: Option<&[u8]>) -> Result<Self> {
        if context.is_empty() {
            return Err(ArcError::invalid("no context nodes"));
        }
        let mut seen = HashSet::with_capacity(context.len());
        for &c in context {
            if c >= n {
                return Err(ArcError::invalid(format!(
                    "context node {c} out of range for {n} nodes"
                )));
            }
            if !seen.insert(c) {
                return Err(ArcError::invalid(format!("context node {c} listed twice")));
            }
            if labels.is_some_and(|y| y[c] != 0) {
                return Err(ArcError::invalid(format!(
                    "context node {c} is labeled anomalous"
                )));
            }
        }
        let query = (0..n).filter(|i| !seen.contains(i)).collect();
        Ok(ContextSplit {
            context: context.to_vec(),
            query,
        })
    }
}

fn check_inputs(h_q: &Tensor, h_k: &Tensor, params: &ScorerParams) -> Result<()> {
    if h_k.rows() == 0 {
        return Err(ArcError::invalid("no context nodes"));
    }
    let d = params.dim();
    if h_q.cols() != d || h_k.cols() != d {
        return Err(ArcError::dim(
            "cross_attend",
            format!(
                "query width {}, context width {}, scorer width {d}",
                h_q.cols(),
                h_k.cols()
            ),
        ));
    }
    Ok(())
}

/// Row-stochastic attention `softmax((H_q W_q)(H_k W_k)ᵀ / √d_e)`.
pub fn attention(h_q: &Tensor, h_k: &Tensor, params: &ScorerParams) -> Result<Tensor> {
    check_inputs(h_q, h_k, params)?;
    let q = tensor::matmul(h_q, params.w_q.value())?;
    let k = tensor::matmul(h_k, params.w_k.value())?;
    let logits = tensor::matmul_nt(&q, &k)?;
    tensor::row_softmax(&logits, (params.dim() as f64).sqrt())
}

/// Reconstructions of the query embeddings from the context embeddings.
pub fn cross_attend(h_q: &Tensor, h_k: &Tensor, params: &ScorerParams) -> Result<Tensor> {
    tensor::matmul(&attention(h_q, h_k, params)?, h_k)
}

/// Same as [`attention`], exported for inspection (row = query, column =
/// context).
pub fn export_attention(h_q: &Tensor, h_k: &Tensor, params: &ScorerParams) -> Result<Tensor> {
    attention(h_q, h_k, params)
}

/// Records cross-attention on `tape`; returns the reconstruction.
pub fn cross_attend_on_tape(tape: &mut Tape, h_q: Var, h_k: Var, w_q: Var, w_k: Var) -> Result<Var> {
    let d = tape.value(w_q).rows();
    if tape.value(h_k).rows() == 0 {
        return Err(ArcError::invalid("no context nodes"));
    }
    let q = tape.matmul(h_q, w_q)?;
    let k = tape.matmul(h_k, w_k)?;
    let logits = tape.matmul_nt(q, k)?;
    let attn = tape.row_softmax(logits, (d as f64).sqrt())?;
    tape.matmul(attn, h_k)
}

/// Per-row L2 distance between embeddings and their reconstructions.
pub fn drift_scores(h_q: &Tensor, h_tilde: &Tensor) -> Result<Vec<f64>> {
    if h_q.shape() != h_tilde.shape() {
        return Err(ArcError::dim(
            "drift_scores",
            format!("{:?} vs {:?}", h_q.shape(), h_tilde.shape()),
        ));
    }
    Ok((0..h_q.rows())
        .map(|r| {
            h_q.row(r)
                .iter()
                .zip(h_tilde.row(r))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .collect())
}

/// Mean of `1 - cos` over normal rows and `max(0, cos - margin)` over
/// anomalous rows.
pub fn marginal_cosine_loss(h_q: &Tensor, h_tilde: &Tensor, anomalous: &[bool], margin: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&margin) {
        return Err(ArcError::invalid(format!("margin {margin} outside [-1, 1]")));
    }
    let mut tape = Tape::new();
    let a = tape.constant(h_q.clone());
    let b = tape.constant(h_tilde.clone());
    let cos = tape.cosine_rows(a, b)?;
    let loss = tape.marginal_cosine_loss(cos, anomalous, margin)?;
    Ok(tape.value(loss).get(0, 0))
}
