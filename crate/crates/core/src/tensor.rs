//! Dense row-major matrices of `f64`.
//!
//! Every fallible operation checks shapes up front and rejects non-finite
//! output, so a `Tensor` that escapes this module is always finite.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{ArcError, Result};

#[derive(Clone, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor({}x{}) ", self.rows, self.cols)?;
        if self.data.len() <= 16 {
            write!(f, "{:?}", self.data)
        } else {
            write!(f, "[{} values]", self.data.len())
        }
    }
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(ArcError::dim(
                "from_vec",
                format!("{} values for a {rows}x{cols} tensor", data.len()),
            ));
        }
        Tensor { rows, cols, data }.finite("from_vec")
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(ArcError::dim(
                    "from_rows",
                    format!("row {i} has {} values, expected {cols}", r.len()),
                ));
            }
            data.extend_from_slice(r);
        }
        Tensor::from_vec(rows.len(), cols, data)
    }

    pub fn column(values: &[f64]) -> Result<Self> {
        Tensor::from_vec(values.len(), 1, values.to_vec())
    }

    /// i.i.d. N(0, std²) entries.
    pub fn randn<R: Rng + ?Sized>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                z * std
            })
            .collect();
        Tensor { rows, cols, data }
    }

    /// Uniform entries in `[lo, hi)`.
    pub fn uniform<R: Rng + ?Sized>(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect();
        Tensor { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable access to the raw buffer. Callers are responsible for
    /// keeping the values finite.
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn col_vec(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn finite(self, op: &'static str) -> Result<Self> {
        if self.is_finite() {
            Ok(self)
        } else {
            Err(ArcError::NonFinite(op))
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn transpose(&self) -> Tensor {
        let mut out = Tensor::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, k: f64) -> Tensor {
        self.map(|v| v * k)
    }

    /// Gather rows by index, in the order given.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Tensor> {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            if i >= self.rows {
                return Err(ArcError::dim(
                    "select_rows",
                    format!("row {i} out of range for {} rows", self.rows),
                ));
            }
            data.extend_from_slice(self.row(i));
        }
        Ok(Tensor {
            rows: idx.len(),
            cols: self.cols,
            data,
        })
    }

    /// Gather columns by index, in the order given.
    pub fn select_cols(&self, idx: &[usize]) -> Result<Tensor> {
        if let Some(&bad) = idx.iter().find(|&&c| c >= self.cols) {
            return Err(ArcError::dim(
                "select_cols",
                format!("column {bad} out of range for {} columns", self.cols),
            ));
        }
        let mut out = Tensor::zeros(self.rows, idx.len());
        for r in 0..self.rows {
            let src = self.row(r);
            let dst = out.row_mut(r);
            for (d, &c) in dst.iter_mut().zip(idx) {
                *d = src[c];
            }
        }
        Ok(out)
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (m, v) in means.iter_mut().zip(self.row(r)) {
                *m += v;
            }
        }
        if self.rows > 0 {
            let n = self.rows as f64;
            means.iter_mut().for_each(|m| *m /= n);
        }
        means
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(ArcError::dim(
            op,
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

/// General product `op(a)·op(b)` where `op` optionally transposes, computed
/// by strided GEMM without materializing the transpose.
fn gemm(a: &Tensor, trans_a: bool, b: &Tensor, trans_b: bool) -> Result<Tensor> {
    let (m, k) = if trans_a { (a.cols, a.rows) } else { (a.rows, a.cols) };
    let (k2, n) = if trans_b { (b.cols, b.rows) } else { (b.rows, b.cols) };
    if k != k2 {
        return Err(ArcError::dim(
            "matmul",
            format!("inner dimensions {k} and {k2} differ"),
        ));
    }
    let mut out = Tensor::zeros(m, n);
    if m == 0 || n == 0 || k == 0 {
        return Ok(out);
    }
    let (rsa, csa) = if trans_a { (1, a.cols as isize) } else { (a.cols as isize, 1) };
    let (rsb, csb) = if trans_b { (1, b.cols as isize) } else { (b.cols as isize, 1) };
    // SAFETY: the strides describe exactly the row-major buffers of `a`, `b`
    // and `out`, whose lengths were checked against the shapes above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            0.0,
            out.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    out.finite("matmul")
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    gemm(a, false, b, false)
}

/// `a · bᵀ`
pub fn matmul_nt(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    gemm(a, false, b, true)
}

/// `aᵀ · b`
pub fn matmul_tn(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    gemm(a, true, b, false)
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("add", a, b)?;
    let data = a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect();
    Tensor {
        rows: a.rows,
        cols: a.cols,
        data,
    }
    .finite("add")
}

pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("sub", a, b)?;
    let data = a.data.iter().zip(&b.data).map(|(x, y)| x - y).collect();
    Tensor {
        rows: a.rows,
        cols: a.cols,
        data,
    }
    .finite("sub")
}

/// Adds a `1×c` row vector to every row of `a`.
pub fn add_row(a: &Tensor, bias: &Tensor) -> Result<Tensor> {
    if bias.rows != 1 || bias.cols != a.cols {
        return Err(ArcError::dim(
            "add_row",
            format!("bias {:?} for input {:?}", bias.shape(), a.shape()),
        ));
    }
    let mut out = a.clone();
    for r in 0..out.rows {
        for (o, b) in out.row_mut(r).iter_mut().zip(&bias.data) {
            *o += b;
        }
    }
    out.finite("add_row")
}

pub fn relu(a: &Tensor) -> Tensor {
    a.map(|v| v.max(0.0))
}

pub fn concat_cols(parts: &[&Tensor]) -> Result<Tensor> {
    let Some(first) = parts.first() else {
        return Ok(Tensor::zeros(0, 0));
    };
    let rows = first.rows;
    if let Some(bad) = parts.iter().find(|p| p.rows != rows) {
        return Err(ArcError::dim(
            "concat_cols",
            format!("{} rows vs {rows}", bad.rows),
        ));
    }
    let cols: usize = parts.iter().map(|p| p.cols).sum();
    let mut out = Tensor::zeros(rows, cols);
    for r in 0..rows {
        let mut off = 0;
        for p in parts {
            out.row_mut(r)[off..off + p.cols].copy_from_slice(p.row(r));
            off += p.cols;
        }
    }
    Ok(out)
}

/// Row-wise softmax of `x / scale` with max subtraction.
pub fn row_softmax(x: &Tensor, scale: f64) -> Result<Tensor> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(ArcError::invalid(format!(
            "softmax scale must be positive, got {scale}"
        )));
    }
    let mut out = x.clone();
    for r in 0..out.rows {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = ((*v - max) / scale).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out.finite("row_softmax")
}

pub(crate) const COSINE_NORM_FLOOR: f64 = 1e-12;

/// Per-row cosine similarity, `n×1`. Row norms below 1e-12 are clamped.
pub fn cosine_rows(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("cosine_rows", a, b)?;
    let data = (0..a.rows)
        .map(|r| {
            let (x, y) = (a.row(r), b.row(r));
            let dot: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
            let nx = norm(x).max(COSINE_NORM_FLOOR);
            let ny = norm(y).max(COSINE_NORM_FLOOR);
            dot / (nx * ny)
        })
        .collect();
    Tensor {
        rows: a.rows,
        cols: 1,
        data,
    }
    .finite("cosine_rows")
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_matmul() {
        let a = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(matmul(&Tensor::identity(2), &a).unwrap(), a);
    }

    #[test]
    fn projector_matmul() {
        let p = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let v = Tensor::from_rows(&[vec![5.0], vec![7.0]]).unwrap();
        assert_eq!(matmul(&p, &v).unwrap().data(), &[5.0, 0.0]);
    }

    #[test]
    fn matmul_shape_mismatch() {
        let err = matmul(&Tensor::zeros(2, 3), &Tensor::zeros(2, 3)).unwrap_err();
        assert!(matches!(err, ArcError::Dimension { .. }));
    }

    #[test]
    fn transposed_products_agree() {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(3);
        let a = Tensor::uniform(3, 4, -1.0, 1.0, &mut rng);
        let b = Tensor::uniform(5, 4, -1.0, 1.0, &mut rng);
        let nt = matmul_nt(&a, &b).unwrap();
        let explicit = matmul(&a, &b.transpose()).unwrap();
        assert!(nt.max_abs_diff(&explicit) < 1e-14);
        let tn = matmul_tn(&a, &a).unwrap();
        let explicit = matmul(&a.transpose(), &a).unwrap();
        assert!(tn.max_abs_diff(&explicit) < 1e-14);
    }

    #[test]
    fn softmax_symmetric_and_stable() {
        let x = Tensor::from_rows(&[vec![0.0, 0.0], vec![1000.0, 0.0]]).unwrap();
        let s = row_softmax(&x, 1.0).unwrap();
        assert_eq!(s.row(0), &[0.5, 0.5]);
        assert!((s.get(1, 0) - 1.0).abs() < 1e-300 + f64::EPSILON);
        assert!(s.get(1, 1) < 1e-300);
    }

    #[test]
    fn softmax_rejects_bad_scale() {
        assert!(row_softmax(&Tensor::zeros(1, 2), 0.0).is_err());
    }

    #[test]
    fn relu_and_concat() {
        let x = Tensor::from_rows(&[vec![-1.0, 0.0, 2.0]]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let a = Tensor::filled(2, 2, 1.0);
        let b = Tensor::filled(2, 3, 2.0);
        let c = concat_cols(&[&a, &b]).unwrap();
        assert_eq!(c.shape(), (2, 5));
        assert_eq!(c.row(1), &[1.0, 1.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn cosine_cases() {
        let a = Tensor::from_rows(&[vec![1.0, 0.0], vec![2.0, 3.0]]).unwrap();
        let b = Tensor::from_rows(&[vec![0.0, 1.0], vec![2.0, 3.0]]).unwrap();
        let c = cosine_rows(&a, &b).unwrap();
        assert_eq!(c.get(0, 0), 0.0);
        assert!((c.get(1, 0) - 1.0).abs() < 1e-15);
        // zero rows are clamped rather than dividing by zero
        let z = cosine_rows(&Tensor::zeros(1, 2), &Tensor::zeros(1, 2)).unwrap();
        assert_eq!(z.get(0, 0), 0.0);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(Tensor::from_vec(1, 1, vec![f64::NAN]).is_err());
        let big = Tensor::filled(1, 1, f64::MAX);
        assert!(matches!(add(&big, &big), Err(ArcError::NonFinite(_))));
    }
}
