//! Helpers shared by the integration tests and the acceptance target.
#![allow(dead_code)]

use arc_core::autograd::{Tape, Var};
use arc_core::error::Result;
use arc_core::tensor::Tensor;
use arc_core::EdgeList;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Norm-wise relative error between two gradients; absolute when both are
/// essentially zero (e.g. an output bias that the residual cancels).
pub fn rel_err(a: &Tensor, b: &Tensor) -> f64 {
    let diff: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na = a.data().iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.data().iter().map(|x| x * x).sum::<f64>().sqrt();
    let denom = na.max(nb);
    if denom < 1e-8 {
        diff
    } else {
        diff / denom
    }
}

/// A graph whose scalar output is built from input leaves.
pub type Builder<'a> = dyn Fn(&mut Tape, &[Var]) -> Result<Var> + 'a;

/// Reduces any output to a scalar with fixed random rank-one weights so
/// every entry contributes to the checked gradient.
pub fn reduce(tape: &mut Tape, out: Var, seed: u64) -> Result<Var> {
    let (r, c) = tape.value(out).shape();
    let mut g = rng(seed ^ 0xabcdef);
    let left = tape.constant(Tensor::uniform(1, r, 0.5, 1.5, &mut g));
    let right = tape.constant(Tensor::uniform(c, 1, -1.0, 1.0, &mut g));
    let t = tape.matmul(left, out)?;
    let t = tape.matmul(t, right)?;
    tape.sum(t)
}

fn eval(build: &Builder, inputs: &[Tensor]) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.input(t.clone())).collect();
    let out = build(&mut tape, &vars).expect("forward");
    tape.value(out).get(0, 0)
}

/// Largest relative error over all inputs between the tape gradient and
/// central finite differences.
pub fn check_inputs(build: &Builder, inputs: &[Tensor]) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.input(t.clone())).collect();
    let out = build(&mut tape, &vars).expect("forward");
    let grads = tape.backward(out).expect("backward");

    let mut worst: f64 = 0.0;
    for (k, x) in inputs.iter().enumerate() {
        let analytic = grads
            .of(vars[k])
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(x.rows(), x.cols()));
        let mut numeric = Tensor::zeros(x.rows(), x.cols());
        for idx in 0..x.len() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[idx] += FD_STEP;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[idx] -= FD_STEP;
            numeric.data_mut()[idx] = (eval(build, &plus) - eval(build, &minus)) / (2.0 * FD_STEP);
        }
        worst = worst.max(rel_err(&analytic, &numeric));
    }
    worst
}

pub struct OpCase {
    pub name: &'static str,
    pub build: Box<Builder<'static>>,
    pub inputs: Vec<Tensor>,
}

fn case(name: &'static str, inputs: Vec<Tensor>, build: impl Fn(&mut Tape, &[Var]) -> Result<Var> + 'static) -> OpCase {
    OpCase {
        name,
        build: Box::new(build),
        inputs,
    }
}

/// One finite-difference case per differentiable op, sized and valued by `seed`.
pub fn op_cases(seed: u64) -> Vec<OpCase> {
    let mut g = rng(seed);
    let mut u = |r, c| Tensor::uniform(r, c, -1.0, 1.0, &mut g);
    let (m, k, n) = (3, 4, 5);
    let labels = vec![true, false, true];
    vec![
        case("matmul", vec![u(m, k), u(k, n)], move |t, v| {
            let o = t.matmul(v[0], v[1])?;
            reduce(t, o, seed)
        }),
        case("matmul_nt", vec![u(m, k), u(n, k)], move |t, v| {
            let o = t.matmul_nt(v[0], v[1])?;
            reduce(t, o, seed)
        }),
        case("add", vec![u(m, k), u(m, k)], move |t, v| {
            let o = t.add(v[0], v[1])?;
            reduce(t, o, seed)
        }),
        case("sub", vec![u(m, k), u(m, k)], move |t, v| {
            let o = t.sub(v[0], v[1])?;
            reduce(t, o, seed)
        }),
        case("add_row", vec![u(m, k), u(1, k)], move |t, v| {
            let o = t.add_row(v[0], v[1])?;
            reduce(t, o, seed)
        }),
        case("scale", vec![u(m, k)], move |t, v| {
            let o = t.scale(v[0], -2.5)?;
            reduce(t, o, seed)
        }),
        case("relu", vec![u(m, k)], move |t, v| {
            let o = t.relu(v[0]);
            reduce(t, o, seed)
        }),
        case("dropout", vec![u(m, k)], move |t, v| {
            let o = t.dropout(v[0], 0.4, seed, true)?;
            reduce(t, o, seed)
        }),
        case("concat_cols", vec![u(m, 2), u(m, 3)], move |t, v| {
            let o = t.concat_cols(&[v[0], v[1], v[0]])?;
            reduce(t, o, seed)
        }),
        case("select_rows", vec![u(m, k)], move |t, v| {
            let o = t.select_rows(v[0], &[2, 0, 2, 1])?;
            reduce(t, o, seed)
        }),
        case("row_softmax", vec![u(m, n)], move |t, v| {
            let o = t.row_softmax(v[0], 1.7)?;
            reduce(t, o, seed)
        }),
        case("cosine_rows", vec![u(m, k), u(m, k)], move |t, v| {
            let o = t.cosine_rows(v[0], v[1])?;
            reduce(t, o, seed)
        }),
        case("marginal_cosine_loss", vec![u(m, k), u(m, k)], move |t, v| {
            let c = t.cosine_rows(v[0], v[1])?;
            t.marginal_cosine_loss(c, &labels, -0.9)
        }),
        case("sum", vec![u(m, k)], |t, v| t.sum(v[0])),
    ]
}

fn all_params_mut(model: &mut arc_core::Checkpoint) -> Vec<&mut arc_core::autograd::Parameter> {
    let mut ps = model.encoder.parameters_mut();
    ps.extend(model.scorer.parameters_mut());
    ps
}

/// Small random labeled graph.
pub fn random_dataset(n: usize, d: usize, anomalies: usize, seed: u64) -> arc_core::Dataset {
    let mut g = rng(seed);
    let x = Tensor::uniform(n, d, -1.0, 1.0, &mut g);
    let mut pairs = Vec::new();
    for i in 1..n {
        pairs.push((g.random_range(0..i), i));
    }
    for _ in 0..n {
        pairs.push((g.random_range(0..n), g.random_range(0..n)));
    }
    let edges = arc_core::EdgeList::new(n, pairs).unwrap();
    let mut labels = vec![0u8; n];
    for i in rand::seq::index::sample(&mut g, n, anomalies) {
        labels[i] = 1;
    }
    arc_core::Dataset::new("random", x, edges, Some(labels)).unwrap()
}

/// Relative error of the full encode, attend and loss gradient with respect
/// to every model parameter, through the real training step.
pub fn composition_error(seed: u64, variant: arc_core::encoder::EncoderVariant) -> f64 {
    use arc_core::pipeline::{episode_loss, init_model, prepare, sample_episode};
    let cfg = arc_core::TrainConfig {
        d_u: 4,
        hops: 2,
        hidden: 5,
        mlp_layers: 2,
        dropout: 0.3,
        margin: -0.5,
        n_k: 3,
        seed,
        encoder: variant,
        init_std: 0.5,
        ..arc_core::TrainConfig::default()
    };
    let ds = random_dataset(14, 6, 3, seed);
    let graph = prepare(&ds, cfg.d_u, cfg.hops, seed).unwrap();
    let ep = sample_episode(ds.labels.as_deref().unwrap(), cfg.n_k, &mut rng(seed + 1)).unwrap();
    let drop_seed = seed.wrapping_mul(31);

    // random biases keep every embedding row away from the zero-norm
    // singularity of the cosine
    let fresh = || {
        let mut m = init_model(&cfg).unwrap();
        let mut g = rng(seed + 2);
        for p in all_params_mut(&mut m) {
            if p.name().ends_with(".bias") {
                let (r, c) = p.value().shape();
                p.set_value(Tensor::uniform(r, c, -0.5, 0.5, &mut g)).unwrap();
            }
        }
        m
    };
    let mut model = fresh();
    episode_loss(&mut model, &graph, &ep, true, drop_seed).unwrap();
    let analytic: Vec<Tensor> = model.parameters().iter().map(|p| p.grad().clone()).collect();

    let loss_at = |m: &arc_core::Checkpoint| {
        let mut m = m.clone();
        episode_loss(&mut m, &graph, &ep, true, drop_seed).unwrap()
    };
    let base = fresh();
    let mut worst: f64 = 0.0;
    for (k, a) in analytic.iter().enumerate() {
        let mut numeric = Tensor::zeros(a.rows(), a.cols());
        for idx in 0..a.len() {
            let shifted = |delta: f64| {
                let mut m = base.clone();
                let p = &mut all_params_mut(&mut m)[k];
                let mut v = p.value().clone();
                v.data_mut()[idx] += delta;
                p.set_value(v).unwrap();
                loss_at(&m)
            };
            numeric.data_mut()[idx] = (shifted(FD_STEP) - shifted(-FD_STEP)) / (2.0 * FD_STEP);
        }
        if std::env::var("GRAD_DEBUG").is_ok() {
            eprintln!("param {k}: err {:e} analytic {:?} numeric {:?}", rel_err(a, &numeric), &a.data()[..3.min(a.len())], &numeric.data()[..3.min(a.len())]);
        }
        worst = worst.max(rel_err(a, &numeric));
    }
    worst
}

pub fn random_graph(n: usize, extra: usize, seed: u64) -> EdgeList {
    let mut g = rng(seed);
    let pairs: Vec<(usize, usize)> = (0..extra).map(|_| (g.random_range(0..n), g.random_range(0..n))).collect();
    EdgeList::new(n, pairs).unwrap()
}

pub fn centroid_distances(hq: &Tensor, hk: &Tensor) -> Vec<f64> {
    let nk = hk.rows() as f64;
    (0..hq.rows())
        .map(|i| {
            (0..hq.cols())
                .map(|c| {
                    let centre: f64 = (0..hk.rows()).map(|j| hk.get(j, c)).sum::<f64>() / nk;
                    (hq.get(i, c) - centre).powi(2)
                })
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

/// P(pos > neg) + ½P(tie) over all pairs.
pub fn pairwise_auroc(s: &[f64], y: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for i in 0..s.len() {
        for j in 0..s.len() {
            if y[i] && !y[j] {
                pairs += 1.0;
                if s[i] > s[j] {
                    wins += 1.0;
                } else if s[i] == s[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

/// Average precision by sweeping every distinct score as a threshold.
pub fn sweep_auprc(s: &[f64], y: &[bool]) -> f64 {
    let total_pos = y.iter().filter(|&&v| v).count() as f64;
    let mut thresholds: Vec<f64> = s.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let (mut ap, mut prev_recall) = (0.0, 0.0);
    for t in thresholds {
        let selected: Vec<usize> = (0..s.len()).filter(|&i| s[i] >= t).collect();
        let tp = selected.iter().filter(|&&i| y[i]).count() as f64;
        let recall = tp / total_pos;
        ap += (recall - prev_recall) * tp / selected.len() as f64;
        prev_recall = recall;
    }
    ap
}

pub fn random_instance(g: &mut impl Rng) -> (Vec<f64>, Vec<bool>) {
    let n = g.random_range(2..=50);
    let levels = g.random_range(1..=n);
    let mut y: Vec<bool> = (0..n).map(|_| g.random_bool(0.4)).collect();
    y[0] = true;
    y[1] = false;
    // few distinct levels forces ties
    let s = (0..n).map(|_| g.random_range(0..levels) as f64 / 7.0).collect();
    (s, y)
}
