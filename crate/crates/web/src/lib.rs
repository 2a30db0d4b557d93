//! Browser bindings: generate a graph, train a small model on a second
//! graph, and inspect scores, attention and the smoothness breakdown.
//!
//! The plain functions are usable natively; the `wasm_*` exports wrap them
//! for JavaScript.

use arc_core::inject::{inject_combined, InjectionSpec};
use arc_core::pipeline::{
    infer_prepared, prepare, sample_context, smoothness_report, train_prepared, SmoothnessOptions,
};
use arc_core::synth::{generate_sbm, planted_smoothness, SbmSpec};
use arc_core::{Dataset, Result, TrainConfig};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct DemoOptions {
    pub nodes: usize,
    pub features: usize,
    pub clique_size: usize,
    pub cliques: usize,
    pub n_k: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for DemoOptions {
    fn default() -> Self {
        DemoOptions {
            nodes: 300,
            features: 50,
            clique_size: 8,
            cliques: 2,
            n_k: 10,
            epochs: 30,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScoreSummary {
    pub auroc: f64,
    pub auprc: f64,
    pub base_rate: f64,
    pub context: Vec<usize>,
    pub query: Vec<usize>,
    pub scores: Vec<f64>,
    pub anomalous: Vec<bool>,
    pub final_loss: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AttentionView {
    pub context: Vec<usize>,
    pub query: Vec<usize>,
    pub anomalous: Vec<bool>,
    /// Row-major, one row per listed query.
    pub weights: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SmoothnessRow {
    pub percentile: String,
    pub n_features: usize,
    pub s_min: f64,
    pub s_max: f64,
    pub auroc: f64,
}

fn demo_config(opts: &DemoOptions) -> TrainConfig {
    TrainConfig {
        d_u: 16,
        hops: 2,
        hidden: 32,
        epochs: opts.epochs,
        n_k: opts.n_k,
        seed: opts.seed,
        ..TrainConfig::default()
    }
}

fn labeled_graph(name: &str, opts: &DemoOptions, features: usize, seed: u64) -> Result<Dataset> {
    let spec = SbmSpec {
        n_nodes: opts.nodes,
        n_features: features,
        seed,
        ..SbmSpec::default()
    };
    let base = generate_sbm(name, &spec)?;
    let inj = InjectionSpec {
        p: opts.clique_size,
        q: opts.cliques,
        k: 20,
        attr_count: None,
        seed: seed.wrapping_add(1),
    };
    inject_combined(&base, &inj)
}

struct Session {
    output: arc_core::pipeline::InferenceOutput,
    labels: Vec<u8>,
    context: Vec<usize>,
    final_loss: Option<f64>,
}

/// Trains on one generated graph, then scores a fresh one in context.
fn run(opts: &DemoOptions) -> Result<Session> {
    let cfg = demo_config(opts);
    let train = labeled_graph("train", opts, opts.features + 17, opts.seed.wrapping_mul(2) + 1)?;
    let test = labeled_graph("test", opts, opts.features, opts.seed.wrapping_mul(2) + 2)?;
    let train_g = prepare(&train, cfg.d_u, cfg.hops, cfg.seed)?;
    let test_g = prepare(&test, cfg.d_u, cfg.hops, cfg.seed)?;
    let model = train_prepared(&[train_g], &cfg)?;
    let labels = test.labels.clone().unwrap_or_default();
    let context = sample_context(&labels, opts.n_k, opts.seed)?;
    let output = infer_prepared(&model, &test_g, &context)?;
    Ok(Session {
        output,
        labels,
        context,
        final_loss: model.log.epoch_loss.last().copied(),
    })
}

pub fn score_graph(opts: &DemoOptions) -> Result<ScoreSummary> {
    let s = run(opts)?;
    let anomalous: Vec<bool> = s.output.query.iter().map(|&i| s.labels[i] == 1).collect();
    let pos = anomalous.iter().filter(|&&a| a).count();
    Ok(ScoreSummary {
        auroc: arc_core::metrics::auroc(&s.output.scores, &anomalous)?,
        auprc: arc_core::metrics::auprc(&s.output.scores, &anomalous)?,
        base_rate: pos as f64 / anomalous.len() as f64,
        context: s.context,
        query: s.output.query,
        scores: s.output.scores,
        anomalous,
        final_loss: s.final_loss,
    })
}

/// Attention of the `rows` highest-scoring queries and as many normal ones
/// over the context nodes.
pub fn attention_view(opts: &DemoOptions, rows: usize) -> Result<AttentionView> {
    let s = run(opts)?;
    let mut order: Vec<usize> = (0..s.output.query.len()).collect();
    order.sort_by(|&a, &b| s.output.scores[b].total_cmp(&s.output.scores[a]));
    let mut picked: Vec<usize> = order.iter().copied().take(rows).collect();
    picked.extend(order.iter().rev().copied().take(rows));
    Ok(AttentionView {
        context: s.context,
        query: picked.iter().map(|&r| s.output.query[r]).collect(),
        anomalous: picked.iter().map(|&r| s.labels[s.output.query[r]] == 1).collect(),
        weights: picked.iter().map(|&r| s.output.attention.row(r).to_vec()).collect(),
    })
}

pub fn smoothness_table(nodes: usize, groups: usize, seed: u64) -> Result<Vec<SmoothnessRow>> {
    let ds = planted_smoothness(nodes, groups, 4, 0.05, seed)?;
    let opts = SmoothnessOptions {
        groups,
        seed,
        ..SmoothnessOptions::default()
    };
    Ok(smoothness_report(&ds, &opts)?
        .into_iter()
        .map(|r| SmoothnessRow {
            percentile: format!("{}-{}", r.percentile.0, r.percentile.1),
            n_features: r.n_features,
            s_min: r.s_min,
            s_max: r.s_max,
            auroc: r.auroc,
        })
        .collect())
}

fn to_js<T: Serialize>(r: Result<T>) -> std::result::Result<JsValue, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_wasm_bindgen::to_value(&v).map_err(|e| JsError::new(&e.to_string()))
}

fn options(js: JsValue) -> std::result::Result<DemoOptions, JsError> {
    if js.is_undefined() || js.is_null() {
        return Ok(DemoOptions::default());
    }
    serde_wasm_bindgen::from_value(js).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = scoreGraph)]
pub fn wasm_score_graph(opts: JsValue) -> std::result::Result<JsValue, JsError> {
    to_js(score_graph(&options(opts)?))
}

#[wasm_bindgen(js_name = attentionView)]
pub fn wasm_attention_view(opts: JsValue, rows: usize) -> std::result::Result<JsValue, JsError> {
    to_js(attention_view(&options(opts)?, rows))
}

#[wasm_bindgen(js_name = smoothnessTable)]
pub fn wasm_smoothness_table(nodes: usize, groups: usize, seed: u64) -> std::result::Result<JsValue, JsError> {
    to_js(smoothness_table(nodes, groups, seed))
}
