//! Independent dense or brute-force re-derivations of the fast paths.

mod common;

use arc_core::align::{align_dataset, fit_projection};
use arc_core::graph::{build_csr, normalize_adjacency, smoothness, spmm};
use arc_core::metrics::{auprc, auroc};
use arc_core::scorer::{attention, cross_attend, drift_scores, ScorerParams};
use arc_core::tensor::{matmul, Tensor};

use arc_core::EdgeList;
use common::*;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

/// D̃^{-1/2}(A+I)D̃^{-1/2} built densely from the edge list.
fn dense_normalized(edges: &EdgeList) -> Tensor {
    let n = edges.n_nodes();
    let mut a = Tensor::identity(n);
    for &(u, v) in edges.pairs() {
        a.set(u, v, 1.0);
        a.set(v, u, 1.0);
    }
    let deg: Vec<f64> = (0..n).map(|i| a.row(i).iter().sum()).collect();
    let mut out = Tensor::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out.set(i, j, a.get(i, j) / (deg[i] * deg[j]).sqrt());
        }
    }
    out
}

#[test]
fn normalized_adjacency_matches_dense_formula() {
    for seed in 0..30 {
        let edges = random_graph(12, 20, seed);
        let sparse = normalize_adjacency(&build_csr(&edges)).to_dense();
        assert!(sparse.max_abs_diff(&dense_normalized(&edges)) < 1e-15);
    }
}

#[test]
fn spmm_and_propagation_match_dense_powers() {
    for seed in 0..20 {
        let edges = random_graph(15, 25, seed);
        let g = normalize_adjacency(&build_csr(&edges));
        let dense = dense_normalized(&edges);
        let x = Tensor::uniform(15, 4, -1.0, 1.0, &mut rng(seed));
        assert!(spmm(&g, &x).unwrap().max_abs_diff(&matmul(&dense, &x).unwrap()) < 1e-13);

        let stages = arc_core::encoder::propagate(&g, &x, 4).unwrap();
        let mut power = x.clone();
        for stage in &stages {
            assert!(stage.max_abs_diff(&power) < 1e-12);
            power = matmul(&dense, &power).unwrap();
        }
    }
}

#[test]
fn laplacian_apply_is_identity_minus_adjacency() {
    for seed in 0..20 {
        let edges = random_graph(10, 14, seed);
        let g = normalize_adjacency(&build_csr(&edges));
        let x = Tensor::uniform(10, 3, -1.0, 1.0, &mut rng(seed));
        let mut lap = Tensor::identity(10);
        let dense = dense_normalized(&edges);
        for (v, a) in lap.data_mut().iter_mut().zip(dense.data()) {
            *v -= a;
        }
        let got = arc_core::graph::laplacian_apply(&g, &x).unwrap();
        assert!(got.max_abs_diff(&matmul(&lap, &x).unwrap()) < 1e-14);
    }
}

#[test]
fn smoothness_matches_edge_loop() {
    let edges = random_graph(9, 15, 4);
    let x = Tensor::uniform(9, 3, -2.0, 2.0, &mut rng(4));
    let s = smoothness(&x, &edges).unwrap();
    for k in 0..3 {
        let mut total = 0.0;
        for &(u, v) in edges.pairs() {
            total += (x.get(u, k) - x.get(v, k)).powi(2);
        }
        assert!((s[k] + total / edges.len() as f64).abs() < 1e-13);
    }
}

#[test]
fn pca_variances_match_nalgebra() {
    for seed in 0..5 {
        let mut g = rng(seed);
        let (n, d, k) = (40, 8, 5);
        let x = Tensor::randn(n, d, 1.0, &mut g);
        let model = fit_projection(&x, k, seed).unwrap();

        let mean = x.column_means();
        let centered = DMatrix::from_fn(n, d, |i, j| x.get(i, j) - mean[j]);
        let cov = centered.transpose() * &centered / (n - 1) as f64;
        let mut expected: Vec<f64> = SymmetricEigen::new(cov).eigenvalues.iter().copied().collect();
        expected.sort_by(|a, b| b.total_cmp(a));
        for (got, want) in model.variances.iter().zip(&expected) {
            assert!((got - want).abs() < 1e-10 * want.max(1.0), "{got} vs {want}");
        }
        // components are orthonormal
        let c = &model.components;
        let gram = arc_core::tensor::matmul_tn(c, c).unwrap();
        assert!(gram.max_abs_diff(&Tensor::identity(k)) < 1e-10);
    }
}

#[test]
fn alignment_commutes_with_node_relabeling() {
    let n = 30;
    let edges = random_graph(n, 60, 8);
    let x = Tensor::randn(n, 12, 1.0, &mut rng(8));
    let perm: Vec<usize> = rand::seq::index::sample(&mut rng(9), n, n).into_vec();
    let mut inv = vec![0; n];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    let px = x.select_rows(&perm).unwrap();
    let pe = EdgeList::new(n, edges.pairs().iter().map(|&(u, v)| (inv[u], inv[v]))).unwrap();

    let a = align_dataset(&x, &edges, 6, 0).unwrap();
    let b = align_dataset(&px, &pe, 6, 0).unwrap();
    assert_eq!(a.permutation, b.permutation);
    let expected = a.features.select_rows(&perm).unwrap();
    assert!(b.features.max_abs_diff(&expected) < 1e-9);
}

#[test]
fn cross_attend_matches_loops() {
    for seed in 0..10 {
        let mut g = rng(seed);
        let (nq, nk, d) = (6, 4, 5);
        let hq = Tensor::randn(nq, d, 1.0, &mut g);
        let hk = Tensor::randn(nk, d, 1.0, &mut g);
        let params = ScorerParams::init(d, 0.7, &mut g);
        let (wq, wk) = (params.w_q.value(), params.w_k.value());
        let proj = |h: &Tensor, w: &Tensor, i: usize, c: usize| (0..d).map(|t| h.get(i, t) * w.get(t, c)).sum::<f64>();

        let got = cross_attend(&hq, &hk, &params).unwrap();
        let att = attention(&hq, &hk, &params).unwrap();
        for i in 0..nq {
            let logits: Vec<f64> = (0..nk)
                .map(|j| (0..d).map(|c| proj(&hq, wq, i, c) * proj(&hk, wk, j, c)).sum::<f64>() / (d as f64).sqrt())
                .collect();
            let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
            for j in 0..nk {
                assert!((att.get(i, j) - (logits[j] - m).exp() / z).abs() < 1e-14);
            }
            for c in 0..d {
                let want: f64 = (0..nk).map(|j| att.get(i, j) * hk.get(j, c)).sum();
                assert!((got.get(i, c) - want).abs() < 1e-13);
            }
        }
    }
}

#[test]
fn zero_scorer_is_centroid_distance() {
    let mut g = rng(5);
    for _ in 0..50 {
        let nq = g.random_range(1..=200);
        let nk = g.random_range(1..=20);
        let d = g.random_range(1..=16);
        let hq = Tensor::randn(nq, d, 1.0, &mut g);
        let hk = Tensor::randn(nk, d, 1.0, &mut g);
        let rebuilt = cross_attend(&hq, &hk, &ScorerParams::zeros(d)).unwrap();
        let scores = drift_scores(&hq, &rebuilt).unwrap();
        for (s, c) in scores.iter().zip(centroid_distances(&hq, &hk)) {
            assert!((s - c).abs() <= 1e-10);
        }
    }
}

#[test]
fn metrics_match_brute_force() {
    let mut g = rng(42);
    for _ in 0..1000 {
        let (s, y) = random_instance(&mut g);
        assert!((auroc(&s, &y).unwrap() - pairwise_auroc(&s, &y)).abs() <= 1e-12);
        assert!((auprc(&s, &y).unwrap() - sweep_auprc(&s, &y)).abs() <= 1e-12);
    }
}
