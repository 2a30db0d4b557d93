//! Joint training over a pool of labeled graphs and few-shot in-context
//! inference on unseen ones.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::align::align_dataset;
use crate::autograd::{Parameter, Tape};
use crate::checkpoint::{Checkpoint, TrainingLog};
use crate::config::TrainConfig;
use crate::dataset::Dataset;
use crate::encoder::{encode, encode_on_tape, propagate, EncoderParams, EncoderVariant};
use crate::error::{ArcError, Result};
use crate::graph::{build_csr, normalize_adjacency, smoothness};
use crate::metrics::{auprc, auroc};
use crate::optim::Adam;
use crate::scorer::{self, cross_attend_on_tape, drift_scores, ContextSplit, ScorerParams};
use crate::tensor::Tensor;

/// A dataset after alignment and propagation: everything the model needs
/// that does not depend on learned weights.
#[derive(Debug, Clone)]
pub struct PreparedGraph {
    pub name: String,
    /// `[X', ÃX', …, Ã^L X']`
    pub stages: Vec<Tensor>,
    pub labels: Option<Vec<u8>>,
    pub rank_deficient: bool,
}

impl PreparedGraph {
    pub fn n_nodes(&self) -> usize {
        self.stages[0].rows()
    }
}

pub fn prepare(ds: &Dataset, d_u: usize, hops: usize, seed: u64) -> Result<PreparedGraph> {
    ds.validate()?;
    let aligned = align_dataset(&ds.features, &ds.edges, d_u, seed)?;
    let g_norm = normalize_adjacency(&build_csr(&ds.edges));
    let stages = propagate(&g_norm, &aligned.features, hops)?;
    Ok(PreparedGraph {
        name: ds.name.clone(),
        stages,
        labels: ds.labels.clone(),
        rank_deficient: aligned.rank_deficient,
    })
}

/// Fresh parameters for `cfg`, with no training applied.
pub fn init_model(cfg: &TrainConfig) -> Result<Checkpoint> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let encoder = EncoderParams::init(&cfg.encoder_config(), &mut rng);
    let scorer = ScorerParams::init(cfg.embedding_dim(), cfg.init_std, &mut rng);
    Ok(Checkpoint {
        config: cfg.clone(),
        encoder,
        scorer,
        log: TrainingLog::default(),
    })
}

fn params_mut(model: &mut Checkpoint) -> Vec<&mut Parameter> {
    let mut all = model.encoder.parameters_mut();
    all.extend(model.scorer.parameters_mut());
    all
}

/// One training episode: context nodes followed by labeled queries.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub context: Vec<usize>,
    pub query: Vec<usize>,
    pub anomalous: Vec<bool>,
}

/// Samples `n_k` normal context nodes, then every anomaly plus an equal
/// number of other normal nodes as queries (fewer if normals run out).
pub fn sample_episode<R: Rng + ?Sized>(labels: &[u8], n_k: usize, rng: &mut R) -> Result<Episode> {
    let normals: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 0).collect();
    let anomalies: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    if anomalies.is_empty() {
        return Err(ArcError::invalid("training dataset has no anomalies"));
    }
    if normals.len() < n_k {
        return Err(ArcError::invalid(format!(
            "{} normal nodes, fewer than n_k = {n_k}",
            normals.len()
        )));
    }
    let want = n_k + anomalies.len().min(normals.len() - n_k);
    let picked: Vec<usize> = sample(rng, normals.len(), want)
        .into_iter()
        .map(|i| normals[i])
        .collect();
    let (context, normal_q) = picked.split_at(n_k);
    let mut query = anomalies.clone();
    query.extend_from_slice(normal_q);
    let anomalous = query.iter().map(|&i| labels[i] == 1).collect();
    Ok(Episode {
        context: context.to_vec(),
        query,
        anomalous,
    })
}

/// Forward and backward pass for one episode. Gradients are added to the
/// model's parameters; returns the loss.
pub fn episode_loss(
    model: &mut Checkpoint,
    graph: &PreparedGraph,
    ep: &Episode,
    train: bool,
    dropout_seed: u64,
) -> Result<f64> {
    let cfg = &model.config;
    let n_k = ep.context.len();
    let rows: Vec<usize> = ep.context.iter().chain(&ep.query).copied().collect();

    let mut tape = Tape::new();
    let h = encode_on_tape(
        &mut tape,
        &graph.stages,
        &model.encoder,
        cfg.encoder,
        Some(&rows),
        0,
        cfg.dropout,
        train,
        dropout_seed,
    )?;
    let first_scorer_id = model.encoder.parameters().len();
    let w_q = tape.param(first_scorer_id, &model.scorer.w_q);
    let w_k = tape.param(first_scorer_id + 1, &model.scorer.w_k);
    let ctx_idx: Vec<usize> = (0..n_k).collect();
    let qry_idx: Vec<usize> = (n_k..rows.len()).collect();
    let h_k = tape.select_rows(h, &ctx_idx)?;
    let h_q = tape.select_rows(h, &qry_idx)?;
    let rebuilt = cross_attend_on_tape(&mut tape, h_q, h_k, w_q, w_k)?;
    let cos = tape.cosine_rows(h_q, rebuilt)?;
    let loss = tape.marginal_cosine_loss(cos, &ep.anomalous, cfg.margin)?;
    let value = tape.value(loss).get(0, 0);

    let grads = tape.backward(loss)?;
    grads.accumulate(&mut params_mut(model))?;
    Ok(value)
}

/// Joint training over already prepared graphs: one optimizer step per
/// graph per epoch, a fresh episode each time.
pub fn train_prepared(graphs: &[PreparedGraph], cfg: &TrainConfig) -> Result<Checkpoint> {
    if graphs.is_empty() {
        return Err(ArcError::invalid("no training datasets"));
    }
    for g in graphs {
        let Some(y) = &g.labels else {
            return Err(ArcError::invalid(format!("training dataset {} is unlabeled", g.name)));
        };
        if !y.contains(&1) {
            return Err(ArcError::invalid(format!("training dataset {} has no anomalies", g.name)));
        }
        if y.iter().filter(|&&v| v == 0).count() < cfg.n_k {
            return Err(ArcError::invalid(format!(
                "training dataset {} has fewer than n_k = {} normal nodes",
                g.name, cfg.n_k
            )));
        }
        if g.stages.len() != cfg.hops + 1 || g.stages[0].cols() != cfg.d_u {
            return Err(ArcError::invalid(format!(
                "dataset {} was prepared for a different d_u / hop count",
                g.name
            )));
        }
    }

    let mut model = init_model(cfg)?;
    let mut opt = Adam::new(cfg.adam(), &model.parameters());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed));
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        let mut total = 0.0;
        for g in graphs {
            let labels = g.labels.as_deref().expect("checked above");
            let ep = sample_episode(labels, cfg.n_k, &mut rng)?;
            let seed = rng.random();
            total += episode_loss(&mut model, g, &ep, true, seed)?;
            opt.step(&mut params_mut(&mut model))?;
        }
        epoch_loss.push(total / graphs.len() as f64);
    }
    model.log = TrainingLog {
        epochs: cfg.epochs,
        steps: opt.steps_taken(),
        epoch_loss,
    };
    Ok(model)
}

/// Aligns every dataset once, then trains a single shared model on all of
/// them.
pub fn train_generalist(datasets: &[Dataset], cfg: &TrainConfig) -> Result<Checkpoint> {
    cfg.validate()?;
    let graphs = datasets
        .iter()
        .map(|ds| {
            if !ds.is_labeled() {
                return Err(ArcError::invalid(format!("training dataset {} is unlabeled", ds.name)));
            }
            ds.check_anomaly_fraction()?;
            prepare(ds, cfg.d_u, cfg.hops, cfg.seed)
        })
        .collect::<Result<Vec<_>>>()?;
    train_prepared(&graphs, cfg)
}

/// Embeddings of every node in evaluation mode.
pub fn embed(model: &Checkpoint, graph: &PreparedGraph) -> Result<Tensor> {
    let cfg = &model.config;
    encode(&graph.stages, &model.encoder, cfg.encoder, cfg.dropout, false, 0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceOutput {
    /// Scored nodes, i.e. every node not in the context, ascending.
    pub query: Vec<usize>,
    pub scores: Vec<f64>,
    /// Row per query, column per context node.
    pub attention: Tensor,
}

impl InferenceOutput {
    pub fn pairs(&self) -> Vec<(usize, f64)> {
        self.query.iter().copied().zip(self.scores.iter().copied()).collect()
    }
}

pub fn infer_prepared(model: &Checkpoint, graph: &PreparedGraph, context: &[usize]) -> Result<InferenceOutput> {
    let split = ContextSplit::complement(graph.n_nodes(), context, graph.labels.as_deref())?;
    let h = embed(model, graph)?;
    let h_k = h.select_rows(&split.context)?;
    let h_q = h.select_rows(&split.query)?;
    let attention = scorer::attention(&h_q, &h_k, &model.scorer)?;
    let rebuilt = crate::tensor::matmul(&attention, &h_k)?;
    let scores = drift_scores(&h_q, &rebuilt)?;
    Ok(InferenceOutput {
        query: split.query,
        scores,
        attention,
    })
}

/// Aligns `ds`, embeds it and scores every node outside `context`.
pub fn infer(ds: &Dataset, model: &Checkpoint, context: &[usize]) -> Result<InferenceOutput> {
    let cfg = &model.config;
    let graph = prepare(ds, cfg.d_u, cfg.hops, cfg.seed)?;
    infer_prepared(model, &graph, context)
}

/// `n_k` distinct normal nodes drawn with `seed`.
pub fn sample_context(labels: &[u8], n_k: usize, seed: u64) -> Result<Vec<usize>> {
    let normals: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 0).collect();
    if n_k == 0 || n_k > normals.len() {
        return Err(ArcError::invalid(format!(
            "cannot draw {n_k} context nodes from {} normal nodes",
            normals.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ctx: Vec<usize> = sample(&mut rng, normals.len(), n_k)
        .into_iter()
        .map(|i| normals[i])
        .collect();
    ctx.sort_unstable();
    Ok(ctx)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalResult {
    pub n_k: usize,
    pub seed: u64,
    pub auroc: f64,
    pub auprc: f64,
    /// Anomaly fraction among the scored nodes.
    pub base_rate: f64,
}

pub fn evaluate_prepared(model: &Checkpoint, graph: &PreparedGraph, n_k: usize, seed: u64) -> Result<EvalResult> {
    let labels = graph
        .labels
        .as_deref()
        .ok_or_else(|| ArcError::invalid(format!("dataset {} is unlabeled", graph.name)))?;
    let context = sample_context(labels, n_k, seed)?;
    let out = infer_prepared(model, graph, &context)?;
    let y: Vec<bool> = out.query.iter().map(|&i| labels[i] == 1).collect();
    let pos = y.iter().filter(|&&v| v).count();
    Ok(EvalResult {
        n_k,
        seed,
        auroc: auroc(&out.scores, &y)?,
        auprc: auprc(&out.scores, &y)?,
        base_rate: pos as f64 / y.len() as f64,
    })
}

/// Scores a labeled dataset with `n_k` normal context nodes sampled by
/// `seed`; metrics cover the query nodes only.
pub fn evaluate(ds: &Dataset, model: &Checkpoint, n_k: usize, seed: u64) -> Result<EvalResult> {
    let cfg = &model.config;
    let graph = prepare(ds, cfg.d_u, cfg.hops, cfg.seed)?;
    evaluate_prepared(model, &graph, n_k, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub n_k: usize,
    pub seeds: usize,
    pub auroc_mean: f64,
    pub auroc_std: f64,
    pub auprc_mean: f64,
    pub auprc_std: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Evaluation repeated over seeds `0..seeds` for every context size.
pub fn nk_sweep(model: &Checkpoint, graph: &PreparedGraph, n_ks: &[usize], seeds: usize) -> Result<Vec<SweepRow>> {
    if seeds == 0 {
        return Err(ArcError::invalid("at least one seed is required"));
    }
    n_ks.iter()
        .map(|&n_k| {
            let runs = (0..seeds as u64)
                .map(|s| evaluate_prepared(model, graph, n_k, s))
                .collect::<Result<Vec<_>>>()?;
            let (auroc_mean, auroc_std) = mean_std(&runs.iter().map(|r| r.auroc).collect::<Vec<_>>());
            let (auprc_mean, auprc_std) = mean_std(&runs.iter().map(|r| r.auprc).collect::<Vec<_>>());
            Ok(SweepRow {
                n_k,
                seeds,
                auroc_mean,
                auroc_std,
                auprc_mean,
                auprc_std,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothnessOptions {
    pub groups: usize,
    pub hops: usize,
    pub n_k: usize,
    pub trials: usize,
    pub seed: u64,
}

impl Default for SmoothnessOptions {
    fn default() -> Self {
        SmoothnessOptions {
            groups: 5,
            hops: 2,
            n_k: 10,
            trials: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothnessGroup {
    pub group: usize,
    /// Percentile range of `s_k` covered by the group, e.g. `(0, 20)`.
    pub percentile: (u32, u32),
    pub n_features: usize,
    pub s_min: f64,
    pub s_max: f64,
    /// Mean AUROC over the trials.
    pub auroc: f64,
}

/// Splits the raw (standardized) feature columns into groups by smoothness,
/// lowest `s_k` first, and scores anomalies with each group alone using a
/// parameter-free residual encoder and the uniform-attention scorer.
pub fn smoothness_report(ds: &Dataset, opts: &SmoothnessOptions) -> Result<Vec<SmoothnessGroup>> {
    let labels = ds
        .labels
        .as_deref()
        .ok_or_else(|| ArcError::invalid("smoothness report needs labels"))?;
    let d = ds.n_features();
    if opts.groups == 0 || d < opts.groups {
        return Err(ArcError::invalid(format!(
            "{d} features cannot form {} groups",
            opts.groups
        )));
    }
    let x = crate::align::standardize_columns(&ds.features)?;
    let s = smoothness(&x, &ds.edges)?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| s[a].total_cmp(&s[b]).then(a.cmp(&b)));

    let g_norm = normalize_adjacency(&build_csr(&ds.edges));
    let y: Vec<bool> = labels.iter().map(|&v| v == 1).collect();
    let mut report = Vec::with_capacity(opts.groups);
    for g in 0..opts.groups {
        let cols = &order[g * d / opts.groups..(g + 1) * d / opts.groups];
        let sub = x.select_cols(cols)?;
        let stages = propagate(&g_norm, &sub, opts.hops)?;
        let identity = EncoderParams::linear(Tensor::identity(cols.len()));
        let h = encode(&stages, &identity, EncoderVariant::Residual, 0.0, false, 0)?;
        let zero = ScorerParams::zeros(h.cols());

        let mut total = 0.0;
        for t in 0..opts.trials.max(1) {
            let ctx = sample_context(labels, opts.n_k, opts.seed.wrapping_add(t as u64))?;
            let split = ContextSplit::complement(ds.n_nodes(), &ctx, Some(labels))?;
            let h_q = h.select_rows(&split.query)?;
            let h_k = h.select_rows(&split.context)?;
            let rebuilt = scorer::cross_attend(&h_q, &h_k, &zero)?;
            let scores = drift_scores(&h_q, &rebuilt)?;
            let yq: Vec<bool> = split.query.iter().map(|&i| y[i]).collect();
            total += auroc(&scores, &yq)?;
        }
        let lo = (100 * g / opts.groups) as u32;
        let hi = (100 * (g + 1) / opts.groups) as u32;
        report.push(SmoothnessGroup {
            group: g,
            percentile: (lo, hi),
            n_features: cols.len(),
            s_min: s[cols[0]],
            s_max: s[*cols.last().expect("non-empty group")],
            auroc: total / opts.trials.max(1) as f64,
        });
    }
    Ok(report)
}
