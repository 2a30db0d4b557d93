//! Undirected graphs in CSR form, GCN-style normalization, sparse-dense
//! propagation and feature-level smoothness.

use std::collections::BTreeSet;

use crate::error::{ArcError, Result};
use crate::tensor::{self, Tensor};

/// Canonical undirected edge set: `u < v`, no self loops, no duplicates,
/// sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeList {
    n_nodes: usize,
    edges: Vec<(usize, usize)>,
}

impl EdgeList {
    /// Builds the canonical edge set from arbitrary pairs. Direction and
    /// duplicates are discarded; self loops are dropped.
    pub fn new(n_nodes: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (u, v) in pairs {
            if u >= n_nodes || v >= n_nodes {
                return Err(ArcError::invalid(format!(
                    "edge ({u}, {v}) out of range for {n_nodes} nodes"
                )));
            }
            if u != v {
                set.insert((u.min(v), u.max(v)));
            }
        }
        Ok(EdgeList {
            n_nodes,
            edges: set.into_iter().collect(),
        })
    }

    pub fn empty(n_nodes: usize) -> Self {
        EdgeList {
            n_nodes,
            edges: Vec::new(),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Returns a new edge set with `extra` merged in.
    pub fn with_edges(&self, extra: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        EdgeList::new(self.n_nodes, self.edges.iter().copied().chain(extra))
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_nodes];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }
}

/// Square sparse matrix in compressed sparse row layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGraph {
    n_nodes: usize,
    offsets: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseGraph {
    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(column, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.offsets[i]..self.offsets[i + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.offsets[i]..self.offsets[i + 1];
        match self.indices[span.clone()].binary_search(&j) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Tensor {
        let mut d = Tensor::zeros(self.n_nodes, self.n_nodes);
        for i in 0..self.n_nodes {
            for (j, v) in self.row(i) {
                d.set(i, j, v);
            }
        }
        d
    }
}

/// Symmetric binary adjacency of an undirected edge set.
pub fn build_csr(edges: &EdgeList) -> SparseGraph {
    let n = edges.n_nodes();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(u, v) in edges.pairs() {
        adj[u].push(v);
        adj[v].push(u);
    }
    csr_from_lists(n, adj, |_, _| 1.0)
}

fn csr_from_lists(
    n: usize,
    mut adj: Vec<Vec<usize>>,
    weight: impl Fn(usize, usize) -> f64,
) -> SparseGraph {
    let mut offsets = Vec::with_capacity(n + 1);
    let mut indices = Vec::new();
    let mut values = Vec::new();
    offsets.push(0);
    for (i, row) in adj.iter_mut().enumerate() {
        row.sort_unstable();
        row.dedup();
        for &j in row.iter() {
            indices.push(j);
            values.push(weight(i, j));
        }
        offsets.push(indices.len());
    }
    SparseGraph {
        n_nodes: n,
        offsets,
        indices,
        values,
    }
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃` the degree matrix of `A + I`.
pub fn normalize_adjacency(g: &SparseGraph) -> SparseGraph {
    let n = g.n_nodes;
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            let mut row: Vec<usize> = g.row(i).map(|(j, _)| j).filter(|&j| j != i).collect();
            row.push(i);
            row
        })
        .collect();
    let inv_sqrt: Vec<f64> = adj.iter().map(|r| 1.0 / (r.len() as f64).sqrt()).collect();
    csr_from_lists(n, adj, |i, j| inv_sqrt[i] * inv_sqrt[j])
}

/// Sparse-dense product `g · x`.
pub fn spmm(g: &SparseGraph, x: &Tensor) -> Result<Tensor> {
    if g.n_nodes != x.rows() {
        return Err(ArcError::dim(
            "spmm",
            format!("{} nodes vs {} feature rows", g.n_nodes, x.rows()),
        ));
    }
    let mut out = Tensor::zeros(x.rows(), x.cols());
    for i in 0..g.n_nodes {
        let span = g.offsets[i]..g.offsets[i + 1];
        for k in span {
            let (j, w) = (g.indices[k], g.values[k]);
            let src = x.row(j);
            for (o, s) in out.row_mut(i).iter_mut().zip(src) {
                *o += w * s;
            }
        }
    }
    out.finite("spmm")
}

/// `x - g·x`, i.e. the normalized Laplacian `I - Ã` applied to `x` when `g`
/// is already normalized.
pub fn laplacian_apply(g: &SparseGraph, x: &Tensor) -> Result<Tensor> {
    tensor::sub(x, &spmm(g, x)?)
}

/// Per-column smoothness `s_k = -(1/|E|) Σ_(i,j)∈E (x_ik - x_jk)²`, each
/// undirected edge counted once.
pub fn smoothness(x: &Tensor, edges: &EdgeList) -> Result<Vec<f64>> {
    if edges.is_empty() {
        return Err(ArcError::invalid("smoothness needs at least one edge"));
    }
    if x.rows() != edges.n_nodes() {
        return Err(ArcError::dim(
            "smoothness",
            format!("{} feature rows vs {} nodes", x.rows(), edges.n_nodes()),
        ));
    }
    let mut s = vec![0.0; x.cols()];
    for &(u, v) in edges.pairs() {
        for ((acc, a), b) in s.iter_mut().zip(x.row(u)).zip(x.row(v)) {
            let d = a - b;
            *acc += d * d;
        }
    }
    let m = edges.len() as f64;
    Ok(s.into_iter().map(|v| -v / m).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_graph_csr() {
        let g = build_csr(&EdgeList::empty(3));
        assert_eq!(g.nnz(), 0);
        assert_eq!(g.offsets(), &[0, 0, 0, 0]);
    }

    #[test]
    fn single_edge_is_symmetric() {
        let g = build_csr(&EdgeList::new(2, [(0, 1)]).unwrap());
        assert_eq!(g.nnz(), 2);
        assert_eq!(g.get(0, 1), 1.0);
        assert_eq!(g.get(1, 0), 1.0);
    }

    #[test]
    fn triangle_rows() {
        let g = build_csr(&EdgeList::new(3, [(0, 1), (1, 2), (0, 2)]).unwrap());
        for i in 0..3 {
            assert_eq!(g.row(i).count(), 2);
        }
    }

    #[test]
    fn edge_list_canonicalizes() {
        let e = EdgeList::new(3, [(1, 0), (0, 1), (2, 2), (2, 1)]).unwrap();
        assert_eq!(e.pairs(), &[(0, 1), (1, 2)]);
        assert!(EdgeList::new(2, [(0, 2)]).is_err());
    }

    #[test]
    fn isolated_node_normalizes_to_one() {
        let g = normalize_adjacency(&build_csr(&EdgeList::empty(1)));
        assert_eq!(g.values(), &[1.0]);
    }

    #[test]
    fn path_normalizes_to_half() {
        let g = normalize_adjacency(&build_csr(&EdgeList::new(2, [(0, 1)]).unwrap()));
        assert_eq!(g.nnz(), 4);
        assert!(g.values().iter().all(|&v| (v - 0.5).abs() < 1e-15));
        let x = Tensor::column(&[0.0, 2.0]).unwrap();
        let y = spmm(&g, &x).unwrap();
        assert!((y.get(0, 0) - 1.0).abs() < 1e-15 && (y.get(1, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn regular_graph_rows_sum_to_one() {
        // 5-cycle is 2-regular
        let e = EdgeList::new(5, (0..5).map(|i| (i, (i + 1) % 5))).unwrap();
        let g = normalize_adjacency(&build_csr(&e));
        for i in 0..5 {
            let s: f64 = g.row(i).map(|(_, v)| v).sum();
            assert!((s - 1.0).abs() < 1e-15);
        }
        let x = Tensor::filled(5, 1, 3.0);
        let l = laplacian_apply(&g, &x).unwrap();
        assert!(l.data().iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn identity_pattern_spmm() {
        let g = normalize_adjacency(&build_csr(&EdgeList::empty(3)));
        let x = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        assert_eq!(spmm(&g, &x).unwrap(), x);
        assert!(laplacian_apply(&g, &x).unwrap().data().iter().all(|&v| v == 0.0));
        assert!(spmm(&g, &Tensor::zeros(2, 2)).is_err());
    }

    #[test]
    fn smoothness_cases() {
        let e = EdgeList::new(2, [(0, 1)]).unwrap();
        let x = Tensor::from_rows(&[vec![0.0, 4.0], vec![1.0, 4.0]]).unwrap();
        assert_eq!(smoothness(&x, &e).unwrap(), vec![-1.0, 0.0]);
        assert!(smoothness(&x, &EdgeList::empty(2)).is_err());
    }
}
