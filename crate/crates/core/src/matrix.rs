//! Dense row-major matrices with the handful of products the model needs.
//!
//! Everything is `f64` and every reduction runs in ascending index order, so
//! identical inputs always produce identical bytes. No blocking or BLAS: the
//! matrices here top out around 64x64 and naive loops are plenty.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length must be rows*cols");
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Matrix { rows: r, cols: c, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        Matrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
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

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copies the given rows (in the given order) into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(indices.len(), self.cols);
        for (k, &i) in indices.iter().enumerate() {
            out.row_mut(k).copy_from_slice(self.row(i));
        }
        out
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                *out.at_mut(j, i) = self.at(i, j);
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        assert_eq!(self.shape(), other.shape(), "add_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Column-wise arithmetic mean over all rows.
    pub fn column_mean(&self) -> Result<Vec<f64>> {
        if self.rows == 0 {
            return Err(Error::EmptyInput("column_mean"));
        }
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let row = self.row(i);
            for j in 0..self.cols {
                out[j] += row[j];
            }
        }
        let inv = 1.0 / self.rows as f64;
        for v in &mut out {
            *v *= inv;
        }
        Ok(out)
    }
}

fn check_finite(op: &'static str, m: &Matrix) {
    debug_assert!(m.is_finite(), "{op}: produced non-finite entries");
    let _ = (op, m);
}

/// C = A B with C_ij = sum_l A_il * B_lj, l ascending.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let mut c = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let a_row = a.row(i);
        let c_row = c.row_mut(i);
        for (l, &a_il) in a_row.iter().enumerate() {
            let b_row = b.row(l);
            for j in 0..b_row.len() {
                c_row[j] += a_il * b_row[j];
            }
        }
    }
    check_finite("matmul", &c);
    Ok(c)
}

/// C = A B^T with C_ij = sum_l A_il * B_jl, l ascending.
pub fn matmul_nt(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.cols {
        return Err(Error::ShapeMismatch {
            op: "matmul_nt",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let mut c = Matrix::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let a_row = a.row(i);
        let c_row = c.row_mut(i);
        for j in 0..b.rows {
            let b_row = b.row(j);
            let mut sum = 0.0;
            for l in 0..a_row.len() {
                sum += a_row[l] * b_row[l];
            }
            c_row[j] = sum;
        }
    }
    check_finite("matmul_nt", &c);
    Ok(c)
}

/// C = A^T B with C_ij = sum_l A_li * B_lj, l ascending.
pub fn matmul_tn(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows != b.rows {
        return Err(Error::ShapeMismatch {
            op: "matmul_tn",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let mut c = Matrix::zeros(a.cols, b.cols);
    for l in 0..a.rows {
        let a_row = a.row(l);
        let b_row = b.row(l);
        for (i, &a_li) in a_row.iter().enumerate() {
            let c_row = c.row_mut(i);
            for j in 0..b_row.len() {
                c_row[j] += a_li * b_row[j];
            }
        }
    }
    check_finite("matmul_tn", &c);
    Ok(c)
}

/// Row-wise softmax with per-row max subtraction for stability.
pub fn softmax_rows(s: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(s.rows(), s.cols());
    for i in 0..s.rows() {
        let row = s.row(i);
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let out_row = out.row_mut(i);
        let mut sum = 0.0;
        for (j, &v) in row.iter().enumerate() {
            let e = (v - max).exp();
            out_row[j] = e;
            sum += e;
        }
        let inv = 1.0 / sum;
        for v in out_row.iter_mut() {
            *v *= inv;
        }
    }
    check_finite("softmax_rows", &out);
    out
}

/// Backward of [`softmax_rows`]: given the forward output `r` and upstream
/// gradient `dr`, returns the gradient with respect to the pre-softmax scores:
/// ds_ij = r_ij * (dr_ij - sum_k dr_ik r_ik).
pub fn softmax_rows_backward(r: &Matrix, dr: &Matrix) -> Matrix {
    assert_eq!(r.shape(), dr.shape(), "softmax backward shape mismatch");
    let mut ds = Matrix::zeros(r.rows(), r.cols());
    for i in 0..r.rows() {
        let r_row = r.row(i);
        let dr_row = dr.row(i);
        let mut dot = 0.0;
        for j in 0..r_row.len() {
            dot += dr_row[j] * r_row[j];
        }
        let ds_row = ds.row_mut(i);
        for j in 0..r_row.len() {
            ds_row[j] = r_row[j] * (dr_row[j] - dot);
        }
    }
    ds
}

/// Central-difference gradient of a scalar function of a matrix:
/// (f(X + h e_ij) - f(X - h e_ij)) / 2h per entry.
///
/// Double precision with the default h = 1e-5 is the only supported regime;
/// `f` must be pure and deterministic.
pub fn fd_gradient<F>(f: F, x: &Matrix, h: f64) -> Result<Matrix>
where
    F: Fn(&Matrix) -> f64,
{
    assert!(h > 0.0, "fd_gradient requires h > 0");
    let mut grad = Matrix::zeros(x.rows(), x.cols());
    let mut probe = x.clone();
    for i in 0..x.rows() {
        for j in 0..x.cols() {
            let orig = probe.at(i, j);
            *probe.at_mut(i, j) = orig + h;
            let plus = f(&probe);
            *probe.at_mut(i, j) = orig - h;
            let minus = f(&probe);
            *probe.at_mut(i, j) = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("fd_gradient evaluation at entry ({i}, {j})"),
                });
            }
            *grad.at_mut(i, j) = (plus - minus) / (2.0 * h);
        }
    }
    Ok(grad)
}

pub const FD_STEP: f64 = 1e-5;

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn matmul_identity() {
        let b = Matrix::from_rows(&[vec![3.0, -1.0], vec![0.5, 2.0]]);
        let c = matmul(&Matrix::identity(2), &b).unwrap();
        assert_eq!(c, b);
    }

    #[test]
    fn matmul_hand_computed() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let b = Matrix::from_rows(&[vec![0.0], vec![1.0]]);
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.data(), &[2.0, 4.0]);
    }

    #[test]
    fn matmul_matches_triple_loop_oracle() {
        let mut state = 0x12345u64;
        let mut next = || {
            // xorshift, good enough for test fixtures
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state % 1000) as f64 / 500.0 - 1.0
        };
        let a = Matrix::from_fn(5, 3, |_, _| next());
        let b = Matrix::from_fn(3, 4, |_, _| next());
        let c = matmul(&a, &b).unwrap();
        for i in 0..5 {
            for j in 0..4 {
                let mut expect = 0.0;
                for l in 0..3 {
                    expect += a.at(i, l) * b.at(l, j);
                }
                assert_eq!(c.at(i, j), expect, "entry ({i},{j})");
            }
        }
    }

    #[test]
    fn matmul_rejects_shape_mismatch() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 3);
        let err = matmul(&a, &b).unwrap_err();
        assert!(err.to_string().contains("2x3"));
    }

    #[test]
    fn matmul_variants_agree_with_explicit_transpose() {
        let a = Matrix::from_fn(4, 3, |i, j| (i * 3 + j) as f64 * 0.25 - 1.0);
        let b = Matrix::from_fn(5, 3, |i, j| (i as f64 - j as f64) * 0.5);
        let nt = matmul_nt(&a, &b).unwrap();
        let reference = matmul(&a, &b.transpose()).unwrap();
        for (x, y) in nt.data().iter().zip(reference.data()) {
            assert_close(*x, *y, 1e-12);
        }
        let c = Matrix::from_fn(4, 2, |i, j| (i + 2 * j) as f64 * 0.1);
        let tn = matmul_tn(&a, &c).unwrap();
        let reference = matmul(&a.transpose(), &c).unwrap();
        for (x, y) in tn.data().iter().zip(reference.data()) {
            assert_close(*x, *y, 1e-12);
        }
    }

    #[test]
    fn softmax_symmetric_row() {
        let s = Matrix::from_rows(&[vec![0.0, 0.0, 0.0]]);
        let r = softmax_rows(&s);
        for j in 0..3 {
            assert_close(r.at(0, j), 1.0 / 3.0, 1e-15);
        }
    }

    #[test]
    fn softmax_single_column() {
        let s = Matrix::from_rows(&[vec![7.25], vec![-3.0]]);
        let r = softmax_rows(&s);
        assert_eq!(r.data(), &[1.0, 1.0]);
    }

    #[test]
    fn softmax_extreme_magnitudes_shift_invariant() {
        let big = softmax_rows(&Matrix::from_rows(&[vec![1000.0, 1001.0]]));
        let small = softmax_rows(&Matrix::from_rows(&[vec![0.0, 1.0]]));
        assert!(big.is_finite());
        assert_close(big.at(0, 0) + big.at(0, 1), 1.0, 1e-12);
        for j in 0..2 {
            assert_close(big.at(0, j), small.at(0, j), 1e-12);
        }
    }

    #[test]
    fn fd_gradient_of_sum_is_ones() {
        let x = Matrix::from_fn(3, 2, |i, j| (i + j) as f64 * 0.3 - 0.4);
        let g = fd_gradient(|m| m.data().iter().sum(), &x, FD_STEP).unwrap();
        for &v in g.data() {
            assert_close(v, 1.0, 1e-9);
        }
    }

    #[test]
    fn fd_gradient_of_squared_norm_is_2x() {
        let x = Matrix::from_fn(4, 3, |i, j| (i as f64 - j as f64) * 0.7 + 0.1);
        let g = fd_gradient(|m| m.data().iter().map(|v| v * v).sum(), &x, FD_STEP).unwrap();
        for (gv, xv) in g.data().iter().zip(x.data()) {
            let rel = (gv - 2.0 * xv).abs() / (2.0 * xv).abs().max(1e-6);
            assert!(rel < 1e-6, "fd {gv} vs analytic {}", 2.0 * xv);
        }
    }

    #[test]
    fn fd_gradient_reports_non_finite_evaluations() {
        let x = Matrix::from_rows(&[vec![0.5, 0.5]]);
        let err = fd_gradient(
            |m| if m.at(0, 1) > 0.5 { f64::NAN } else { 0.0 },
            &x,
            FD_STEP,
        )
        .unwrap_err();
        assert!(err.to_string().contains("(0, 1)"), "{err}");
    }

    #[test]
    fn operations_are_bit_deterministic() {
        let a = Matrix::from_fn(6, 5, |i, j| ((i * 31 + j * 17) % 11) as f64 * 0.731 - 3.0);
        let b = Matrix::from_fn(5, 4, |i, j| ((i * 13 + j * 7) % 9) as f64 * 0.413 - 1.5);
        let c1 = matmul(&a, &b).unwrap();
        let c2 = matmul(&a, &b).unwrap();
        assert_eq!(c1.data(), c2.data());
        let r1 = softmax_rows(&c1);
        let r2 = softmax_rows(&c2);
        assert_eq!(r1.data(), r2.data());
    }
}
