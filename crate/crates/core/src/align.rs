//! Smoothness-based feature alignment.
//!
//! Every dataset is projected to a shared width `d_u` with its own PCA
//! (optionally preceded by a Gaussian upscale when the raw width is below
//! `d_u`), standardized per column, and its columns reordered so that the
//! least smooth (highest frequency) feature comes first. The projection is
//! unsupervised and fit per dataset, so unseen graphs need nothing stored.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ArcError, Result};
use crate::graph::{smoothness, EdgeList};
use crate::linalg::{jacobi_eigen, orthonormal_columns, randomized_covariance_eigen};
use crate::tensor::{self, Tensor};

/// Shared projected width used unless configured otherwise.
pub const DEFAULT_DU: usize = 64;

/// Above this width the exact eigensolver is swapped for randomized
/// subspace iteration.
pub const EXACT_EIGEN_LIMIT: usize = 2048;

const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionKind {
    Pca,
    RandomThenPca,
}

#[derive(Debug, Clone)]
pub struct ProjectionModel {
    pub kind: ProjectionKind,
    pub mean: Vec<f64>,
    /// `d_in × d_up` Gaussian map, present for [`ProjectionKind::RandomThenPca`].
    pub upscale: Option<Tensor>,
    /// Orthonormal columns, one per output feature.
    pub components: Tensor,
    /// Variance captured by each component on the fitting data.
    pub variances: Vec<f64>,
    /// Number of leading components with non-negligible variance.
    pub rank: usize,
    pub seed: u64,
}

impl ProjectionModel {
    pub fn d_in(&self) -> usize {
        self.mean.len()
    }

    pub fn d_u(&self) -> usize {
        self.components.cols()
    }

    /// Set when fewer than `d_u` directions carry variance and the rest
    /// were completed from the null space.
    pub fn rank_deficient(&self) -> bool {
        self.rank < self.d_u()
    }
}

fn center(x: &Tensor, mean: &[f64]) -> Tensor {
    let mut xc = x.clone();
    for r in 0..xc.rows() {
        xc.row_mut(r).iter_mut().zip(mean).for_each(|(v, m)| *v -= m);
    }
    xc
}

/// Makes the largest-magnitude entry of every column positive.
fn fix_signs(components: &mut Tensor) {
    for c in 0..components.cols() {
        let col = components.col_vec(c);
        let mut best = 0;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            for r in 0..components.rows() {
                let v = components.get(r, c);
                components.set(r, c, -v);
            }
        }
    }
}

pub fn fit_projection(x: &Tensor, d_u: usize, seed: u64) -> Result<ProjectionModel> {
    if d_u == 0 {
        return Err(ArcError::invalid("projected dimension must be at least 1"));
    }
    if x.rows() < 2 {
        return Err(ArcError::invalid(format!(
            "projection needs at least 2 rows, got {}",
            x.rows()
        )));
    }
    let d_in = x.cols();
    if d_in == 0 {
        return Err(ArcError::invalid("projection needs at least one feature"));
    }
    let mean = x.column_means();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let (kind, upscale, work) = if d_in >= d_u {
        (ProjectionKind::Pca, None, center(x, &mean))
    } else {
        let d_up = (2 * d_u).max(d_in);
        let r = Tensor::randn(d_in, d_up, 1.0 / (d_in as f64).sqrt(), &mut rng);
        let work = tensor::matmul(&center(x, &mean), &r)?;
        (ProjectionKind::RandomThenPca, Some(r), work)
    };

    let d_p = work.cols();
    let eig = if d_p <= EXACT_EIGEN_LIMIT {
        let cov = tensor::matmul_tn(&work, &work)?.scale(1.0 / (work.rows() - 1) as f64);
        jacobi_eigen(&cov)
    } else {
        randomized_covariance_eigen(&work, d_u, 10, 4, &mut rng)
    };

    let top = eig.values.first().copied().unwrap_or(0.0).max(0.0);
    let mut variances: Vec<f64> = eig.values.iter().take(d_u).map(|v| v.max(0.0)).collect();
    let rank = variances
        .iter()
        .take_while(|&&v| top > 0.0 && v > RANK_TOL * top)
        .count();
    variances.resize(d_u, 0.0);

    let found: Vec<usize> = (0..rank).collect();
    let mut components = if rank == d_u {
        eig.vectors.select_cols(&found)?
    } else {
        // keep the informative directions, complete the rest orthonormally
        let lead = eig.vectors.select_cols(&found)?;
        let mut seeds = lead.clone();
        if eig.vectors.cols() > rank {
            let rest: Vec<usize> = (rank..eig.vectors.cols()).collect();
            seeds = tensor::concat_cols(&[&lead, &eig.vectors.select_cols(&rest)?])?;
        }
        orthonormal_columns(&seeds, d_u).0
    };
    fix_signs(&mut components);

    Ok(ProjectionModel {
        kind,
        mean,
        upscale,
        components,
        variances,
        rank,
        seed,
    })
}

pub fn apply_projection(model: &ProjectionModel, x: &Tensor) -> Result<Tensor> {
    if x.cols() != model.d_in() {
        return Err(ArcError::dim(
            "apply_projection",
            format!("{} features for a model fit on {}", x.cols(), model.d_in()),
        ));
    }
    let mut work = center(x, &model.mean);
    if let Some(r) = &model.upscale {
        work = tensor::matmul(&work, r)?;
    }
    tensor::matmul(&work, &model.components)
}

/// Zero mean, unit population variance per column; near-constant columns
/// (std below 1e-12) become all zeros.
pub fn standardize_columns(x: &Tensor) -> Result<Tensor> {
    if x.rows() < 2 {
        return Err(ArcError::invalid("standardization needs at least 2 rows"));
    }
    let n = x.rows() as f64;
    let means = x.column_means();
    let mut var = vec![0.0; x.cols()];
    for r in 0..x.rows() {
        for ((acc, v), m) in var.iter_mut().zip(x.row(r)).zip(&means) {
            *acc += (v - m) * (v - m);
        }
    }
    let stds: Vec<f64> = var.iter().map(|v| (v / n).sqrt()).collect();
    let mut out = x.clone();
    for r in 0..out.rows() {
        for ((v, m), s) in out.row_mut(r).iter_mut().zip(&means).zip(&stds) {
            *v = if *s < 1e-12 { 0.0 } else { (*v - m) / s };
        }
    }
    out.finite("standardize_columns")
}

#[derive(Debug, Clone)]
pub struct AlignmentResult {
    pub features: Tensor,
    /// `permutation[k]` is the input column placed at output position `k`.
    pub permutation: Vec<usize>,
    /// Smoothness of each output column, non-decreasing.
    pub smoothness: Vec<f64>,
    pub rank_deficient: bool,
}

/// Reorders columns by ascending smoothness (least smooth first), ties kept
/// in input order.
pub fn sort_by_smoothness(x: &Tensor, edges: &EdgeList) -> Result<AlignmentResult> {
    let s = smoothness(x, edges)?;
    let mut permutation: Vec<usize> = (0..x.cols()).collect();
    permutation.sort_by(|&a, &b| s[a].total_cmp(&s[b]).then(a.cmp(&b)));
    Ok(AlignmentResult {
        features: x.select_cols(&permutation)?,
        smoothness: permutation.iter().map(|&k| s[k]).collect(),
        permutation,
        rank_deficient: false,
    })
}

/// Projection, standardization and smoothness sorting, in that order.
pub fn align_dataset(x: &Tensor, edges: &EdgeList, d_u: usize, seed: u64) -> Result<AlignmentResult> {
    if x.rows() != edges.n_nodes() {
        return Err(ArcError::dim(
            "align_dataset",
            format!("{} feature rows vs {} nodes", x.rows(), edges.n_nodes()),
        ));
    }
    let model = fit_projection(x, d_u, seed)?;
    let mut projected = apply_projection(&model, x)?;
    // directions without variance are exactly zero on the fitting data
    for r in 0..projected.rows() {
        projected.row_mut(r)[model.rank..].iter_mut().for_each(|v| *v = 0.0);
    }
    let standardized = standardize_columns(&projected)?;
    let mut result = sort_by_smoothness(&standardized, edges)?;
    result.rank_deficient = model.rank_deficient();
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardize_small_column() {
        let x = Tensor::from_rows(&[vec![1.0, 5.0], vec![3.0, 5.0]]).unwrap();
        let s = standardize_columns(&x).unwrap();
        assert_eq!(s.col_vec(0), vec![-1.0, 1.0]);
        assert_eq!(s.col_vec(1), vec![0.0, 0.0]);
    }

    #[test]
    fn sort_places_lowest_first() {
        // s = (-0.2, -0.9, 0) on a single edge: squared diffs 0.2, 0.9, 0
        let e = EdgeList::new(2, [(0, 1)]).unwrap();
        let a = 0.2f64.sqrt();
        let b = 0.9f64.sqrt();
        let x = Tensor::from_rows(&[vec![0.0, 0.0, 1.0], vec![a, b, 1.0]]).unwrap();
        let r = sort_by_smoothness(&x, &e).unwrap();
        assert_eq!(r.permutation, vec![1, 0, 2]);
        assert!(r.smoothness.windows(2).all(|w| w[0] <= w[1]));

        let again = sort_by_smoothness(&r.features, &e).unwrap();
        assert_eq!(again.permutation, vec![0, 1, 2]);
        assert_eq!(again.features, r.features);
    }

    #[test]
    fn line_data_first_component() {
        let x = Tensor::from_rows(&[
            vec![-2.0, -2.0],
            vec![-1.0, -1.0],
            vec![0.5, 0.5],
            vec![3.0, 3.0],
        ])
        .unwrap();
        let m = fit_projection(&x, 1, 0).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((m.components.get(0, 0) - h).abs() < 1e-12);
        assert!((m.components.get(1, 0) - h).abs() < 1e-12);
        assert!(!m.rank_deficient());
    }

    #[test]
    fn rank_deficiency_is_flagged_and_completed() {
        let x = Tensor::from_rows(&[vec![1.0, 1.0, 0.0], vec![2.0, 2.0, 0.0], vec![4.0, 4.0, 0.0]])
            .unwrap();
        let m = fit_projection(&x, 3, 0).unwrap();
        assert!(m.rank_deficient());
        assert_eq!(m.rank, 1);
        let gram = tensor::matmul_tn(&m.components, &m.components).unwrap();
        assert!(gram.max_abs_diff(&Tensor::identity(3)) < 1e-10);
    }

    #[test]
    fn constant_input_projects_to_zero() {
        let x = Tensor::filled(5, 4, 2.5);
        let m = fit_projection(&x, 2, 0).unwrap();
        let p = apply_projection(&m, &x).unwrap();
        assert!(p.data().iter().all(|&v| v == 0.0));
        assert!(apply_projection(&m, &Tensor::zeros(2, 3)).is_err());
    }

    #[test]
    fn narrow_input_is_upscaled() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::randn(30, 3, 1.0, &mut rng);
        let m = fit_projection(&x, 8, 7).unwrap();
        assert_eq!(m.kind, ProjectionKind::RandomThenPca);
        assert_eq!(m.upscale.as_ref().unwrap().shape(), (3, 16));
        assert_eq!(m.rank, 3);
        let p = apply_projection(&m, &x).unwrap();
        assert_eq!(p.shape(), (30, 8));
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(fit_projection(&Tensor::zeros(1, 3), 2, 0).is_err());
        assert!(fit_projection(&Tensor::zeros(4, 3), 0, 0).is_err());
        let e = EdgeList::empty(3);
        assert!(align_dataset(&Tensor::zeros(3, 2), &e, 2, 0).is_err());
    }
}
