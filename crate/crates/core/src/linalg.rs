//! Symmetric eigendecomposition and a randomized top-k variant.

use rand::Rng;

use crate::tensor::{self, Tensor};

/// Eigenpairs sorted by descending eigenvalue; `vectors` holds one
/// eigenvector per column.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Tensor,
}

const MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
pub fn jacobi_eigen(m: &Tensor) -> SymEigen {
    let n = m.rows();
    assert_eq!(n, m.cols(), "jacobi_eigen needs a square matrix");
    let mut a = m.data().to_vec();
    let mut v = Tensor::identity(n).into_vec();
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|p| (p + 1..n).map(move |q| (p, q)))
            .map(|(p, q)| a[p * n + q] * a[p * n + q])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let vectors = Tensor::from_vec(n, n, v)
        .and_then(|t| t.select_cols(&order))
        .expect("jacobi produced a finite basis");
    SymEigen { values, vectors }
}

/// Gram-Schmidt on the columns of `m`, returning `k` orthonormal columns.
/// Columns that are numerically dependent are replaced by standard basis
/// vectors orthogonalized against the ones already kept. Returns the basis
/// and how many columns had to be filled in this way.
pub fn orthonormal_columns(m: &Tensor, k: usize) -> (Tensor, usize) {
    let d = m.rows();
    assert!(k <= d, "cannot fit {k} orthonormal columns in dimension {d}");
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut filled = 0;

    let try_add = |basis: &mut Vec<Vec<f64>>, mut v: Vec<f64>| -> bool {
        let before = tensor::norm(&v);
        if before == 0.0 {
            return false;
        }
        // two passes of modified Gram-Schmidt for stability
        for _ in 0..2 {
            for b in basis.iter() {
                let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
            }
        }
        let after = tensor::norm(&v);
        if after <= 1e-10 * before {
            return false;
        }
        v.iter_mut().for_each(|x| *x /= after);
        basis.push(v);
        true
    };

    for c in 0..m.cols() {
        if basis.len() == k {
            break;
        }
        try_add(&mut basis, m.col_vec(c));
    }
    let mut e = 0;
    while basis.len() < k && e < d {
        let mut unit = vec![0.0; d];
        unit[e] = 1.0;
        if try_add(&mut basis, unit) {
            filled += 1;
        }
        e += 1;
    }

    let mut out = Tensor::zeros(d, k);
    for (c, b) in basis.iter().enumerate() {
        for (r, &x) in b.iter().enumerate() {
            out.set(r, c, x);
        }
    }
    (out, filled)
}

/// Top-`k` eigenpairs of the covariance `xcᵀ·xc / (n-1)` by randomized
/// subspace iteration, never forming the covariance explicitly. `xc` must
/// already be column-centered.
pub fn randomized_covariance_eigen<R: Rng + ?Sized>(
    xc: &Tensor,
    k: usize,
    oversample: usize,
    power_iters: usize,
    rng: &mut R,
) -> SymEigen {
    let d = xc.cols();
    let width = (k + oversample).min(d);
    let denom = (xc.rows().max(2) - 1) as f64;
    let apply = |q: &Tensor| -> Tensor {
        let xq = tensor::matmul(xc, q).expect("shapes checked");
        tensor::matmul_tn(xc, &xq).expect("shapes checked").scale(1.0 / denom)
    };

    let omega = Tensor::randn(d, width, 1.0, rng);
    let (mut q, _) = orthonormal_columns(&apply(&omega), width);
    for _ in 0..power_iters {
        q = orthonormal_columns(&apply(&q), width).0;
    }
    let cq = apply(&q);
    let small = tensor::matmul_tn(&q, &cq).expect("shapes checked");
    // symmetrize away rounding noise
    let sym = tensor::add(&small, &small.transpose()).expect("square").scale(0.5);
    let eig = jacobi_eigen(&sym);
    let vectors = tensor::matmul(&q, &eig.vectors).expect("shapes checked");
    let keep: Vec<usize> = (0..k.min(width)).collect();
    SymEigen {
        values: eig.values[..keep.len()].to_vec(),
        vectors: vectors.select_cols(&keep).expect("in range"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_sym(n: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Tensor::uniform(n, n, -1.0, 1.0, &mut rng);
        tensor::add(&a, &a.transpose()).unwrap()
    }

    #[test]
    fn jacobi_reconstructs() {
        for seed in 0..5 {
            let m = random_sym(7, seed);
            let eig = jacobi_eigen(&m);
            let v = &eig.vectors;
            let mut lam = Tensor::zeros(7, 7);
            for i in 0..7 {
                lam.set(i, i, eig.values[i]);
            }
            let rebuilt = tensor::matmul_nt(&tensor::matmul(v, &lam).unwrap(), v).unwrap();
            assert!(rebuilt.max_abs_diff(&m) < 1e-12);
            let gram = tensor::matmul_tn(v, v).unwrap();
            assert!(gram.max_abs_diff(&Tensor::identity(7)) < 1e-12);
            assert!(eig.values.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn completion_fills_dependent_columns() {
        let m = Tensor::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0], vec![0.0, 0.0]]).unwrap();
        let (q, filled) = orthonormal_columns(&m, 3);
        assert_eq!(filled, 2);
        let gram = tensor::matmul_tn(&q, &q).unwrap();
        assert!(gram.max_abs_diff(&Tensor::identity(3)) < 1e-12);
    }

    #[test]
    fn randomized_matches_jacobi_on_low_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // rank-4 data in 30 dimensions
        let basis = Tensor::randn(4, 30, 1.0, &mut rng);
        let coeffs = Tensor::randn(60, 4, 1.0, &mut rng);
        let x = tensor::matmul(&coeffs, &basis).unwrap();
        let means = x.column_means();
        let mut xc = x.clone();
        for r in 0..xc.rows() {
            xc.row_mut(r).iter_mut().zip(&means).for_each(|(v, m)| *v -= m);
        }
        let cov = tensor::matmul_tn(&xc, &xc).unwrap().scale(1.0 / 59.0);
        let exact = jacobi_eigen(&cov);
        let approx = randomized_covariance_eigen(&xc, 3, 5, 2, &mut rng);
        for i in 0..3 {
            let rel = (approx.values[i] - exact.values[i]).abs() / exact.values[i];
            assert!(rel < 1e-9, "eigenvalue {i}: {rel}");
        }
    }
}
