//! Dense row-major matrices together with the scalar and matrix-valued
//! inner products used throughout the crate.
//!
//! Besides the usual Frobenius pairing `<A, B> = sum_ij a_ij b_ij`, samples
//! live in a matrix Hilbert space whose inner product is matrix valued,
//! `<A, B>_H = A^T B`. A symmetric weight matrix `V` turns that pairing back
//! into a scalar through `<A^T B, V / ||V||>`, which is what [`h_norm`]
//! evaluates.

use std::fmt;

use crate::error::{Error, Result};

/// Dense real `rows x cols` matrix stored row-major.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major data, rejecting empty shapes, length
    /// mismatches and non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidMatrix(format!(
                "shape {rows}x{cols} must be positive"
            )));
        }
        let expected = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::InvalidMatrix(format!("shape {rows}x{cols} overflows")))?;
        if data.len() != expected {
            return Err(Error::dimension(
                format!("{expected} entries for {rows}x{cols}"),
                format!("{} entries", data.len()),
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "entry ({}, {}) is {}",
                pos / cols,
                pos % cols,
                data[pos]
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix shape must be positive");
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(rows > 0 && cols > 0, "matrix shape must be positive");
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    /// Builds a matrix from a slice of equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != n_cols {
                return Err(Error::dimension(
                    format!("{n_cols} columns"),
                    format!("{} columns in row {i}", row.len()),
                ));
            }
            data.extend_from_slice(row);
        }
        Matrix::new(n_rows, n_cols, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    pub fn scaled(&self, factor: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    /// `self += factor * other`.
    pub fn axpy(&mut self, factor: f64, other: &Matrix) -> Result<()> {
        self.check_same_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += factor * b;
        }
        Ok(())
    }

    /// `self += factor * other^T`; `other` must have the transposed shape.
    pub fn axpy_transposed(&mut self, factor: f64, other: &Matrix) -> Result<()> {
        if self.rows != other.cols || self.cols != other.rows {
            return Err(Error::dimension(
                format!("{}x{}", self.cols, self.rows),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        for r in 0..self.rows {
            for c in 0..self.cols {
                self.data[r * self.cols + c] += factor * other.data[c * other.cols + r];
            }
        }
        Ok(())
    }

    /// Matrix product `self * other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::dimension(
                format!("{} rows", self.cols),
                format!("{} rows", other.rows),
            ));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[r * self.cols + k];
                let row = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[r * other.cols..(r + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Largest relative asymmetry `max |a_ij - a_ji| / max(1, max |a|)`.
    pub fn asymmetry(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let scale = self.max_norm().max(1.0);
        let mut worst = 0.0f64;
        for r in 0..self.rows {
            for c in (r + 1)..self.cols {
                worst = worst.max((self.get(r, c) - self.get(c, r)).abs());
            }
        }
        worst / scale
    }

    /// `(A + A^T) / 2` for a square matrix.
    pub fn symmetrized(&self) -> Matrix {
        assert!(self.is_square(), "symmetrized needs a square matrix");
        Matrix::from_fn(self.rows, self.cols, |r, c| {
            0.5 * (self.get(r, c) + self.get(c, r))
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius_norm(self)
    }

    pub fn one_norm(&self) -> f64 {
        one_norm(self)
    }

    pub fn max_norm(&self) -> f64 {
        max_norm(self)
    }

    pub(crate) fn check_same_shape(&self, other: &Matrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::dimension(
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        Ok(())
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            if r > 0 {
                write!(f, "; ")?;
            }
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (c, v) in row.iter().enumerate() {
                if c > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{v}")?;
            }
        }
        write!(f, "]")
    }
}

/// Scalar Frobenius inner product `sum_ij a_ij b_ij`.
pub fn frobenius_inner(a: &Matrix, b: &Matrix) -> Result<f64> {
    a.check_same_shape(b)?;
    Ok(dot(&a.data, &b.data))
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Matrix-valued inner product `<A, B>_H = A^T B` (an `n x n` matrix for
/// `m x n` inputs).
pub fn matrix_inner(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    a.check_same_shape(b)?;
    let (m, n) = a.shape();
    let mut out = Matrix::zeros(n, n);
    for r in 0..m {
        let ar = &a.data[r * n..(r + 1) * n];
        let br = &b.data[r * n..(r + 1) * n];
        for (i, &x) in ar.iter().enumerate() {
            let dst = &mut out.data[i * n..(i + 1) * n];
            for (d, &y) in dst.iter_mut().zip(br) {
                *d += x * y;
            }
        }
    }
    Ok(out)
}

pub fn frobenius_norm(a: &Matrix) -> f64 {
    dot(&a.data, &a.data).sqrt()
}

/// Maximum absolute column sum.
pub fn one_norm(a: &Matrix) -> f64 {
    (0..a.cols)
        .map(|c| (0..a.rows).map(|r| a.get(r, c).abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Maximum absolute entry.
pub fn max_norm(a: &Matrix) -> f64 {
    a.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

const SYMMETRY_TOL: f64 = 1e-10;
const NEGATIVE_CLAMP: f64 = 1e-10;

/// A symmetric weight matrix `V` with its cached Frobenius norm, ready to
/// project matrix inner products onto scalars.
#[derive(Clone, Debug)]
pub struct HNormContext {
    v: Matrix,
    v_fro: f64,
}

impl HNormContext {
    /// Checks that `v` is square, symmetric to 1e-10 relative and nonzero,
    /// then stores its symmetric part.
    pub fn new(v: &Matrix) -> Result<Self> {
        if !v.is_square() {
            return Err(Error::InvalidContext(format!(
                "weight matrix must be square, got {}x{}",
                v.rows(),
                v.cols()
            )));
        }
        let asym = v.asymmetry();
        if asym > SYMMETRY_TOL {
            return Err(Error::InvalidContext(format!(
                "weight matrix asymmetry {asym:e} exceeds {SYMMETRY_TOL:e}"
            )));
        }
        let v = v.symmetrized();
        let v_fro = v.frobenius_norm();
        if v_fro.is_nan() || v_fro <= 0.0 {
            return Err(Error::InvalidContext("weight matrix is zero".into()));
        }
        Ok(HNormContext { v, v_fro })
    }

    pub fn v(&self) -> &Matrix {
        &self.v
    }

    pub fn v_fro(&self) -> f64 {
        self.v_fro
    }

    pub fn dim(&self) -> usize {
        self.v.rows()
    }

    /// `<M, V / ||V||>` for an `n x n` matrix `M`.
    pub fn project(&self, m: &Matrix) -> Result<f64> {
        Ok(frobenius_inner(m, &self.v)? / self.v_fro)
    }
}

/// `||x||_H(V) = <x^T x, V / ||V||>^(1/2)`.
///
/// Values in `[-1e-10, 0)` are round-off on a nonnegative quantity and are
/// clamped to zero; anything more negative means `V` does not satisfy the
/// positivity condition for this `x`.
pub fn h_norm(x: &Matrix, ctx: &HNormContext) -> Result<f64> {
    if x.cols() != ctx.dim() {
        return Err(Error::dimension(
            format!("{} columns", ctx.dim()),
            format!("{} columns", x.cols()),
        ));
    }
    let gram = matrix_inner(x, x)?;
    let value = ctx.project(&gram)?;
    if value >= 0.0 {
        Ok(value.sqrt())
    } else if value >= -NEGATIVE_CLAMP {
        Ok(0.0)
    } else {
        Err(Error::InvalidContext(format!(
            "weight matrix yields negative squared norm {value:e}"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_fn(r, c, |_, _| rng.random_range(-2.0..2.0))
    }

    #[test]
    fn frobenius_inner_examples() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(frobenius_inner(&a, &Matrix::identity(2)).unwrap(), 5.0);
        let x = m(&[&[3.0, 4.0]]);
        assert_eq!(frobenius_inner(&x, &x).unwrap(), 25.0);
        assert_eq!(frobenius_inner(&Matrix::zeros(2, 2), &a).unwrap(), 0.0);
        assert!(matches!(
            frobenius_inner(&a, &x),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn matrix_inner_examples() {
        let i2 = Matrix::identity(2);
        assert_eq!(matrix_inner(&i2, &i2).unwrap(), i2);
        let y = m(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert_eq!(matrix_inner(&i2, &y).unwrap(), y);
        assert!(matrix_inner(&i2, &Matrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn matrix_inner_is_transpose_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let x = random(&mut rng, 4, 3);
            let y = random(&mut rng, 4, 3);
            let xy = matrix_inner(&x, &y).unwrap();
            let yx = matrix_inner(&y, &x).unwrap();
            assert_eq!(xy, yx.transpose());
        }
    }

    #[test]
    fn norms() {
        assert_eq!(frobenius_norm(&m(&[&[3.0, 4.0]])), 5.0);
        assert_eq!(one_norm(&m(&[&[1.0, -2.0], &[3.0, 4.0]])), 6.0);
        assert_eq!(max_norm(&m(&[&[1.0, -7.0], &[3.0, 4.0]])), 7.0);
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(Matrix::new(0, 2, vec![]).is_err());
        assert!(Matrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(matches!(
            Matrix::new(1, 2, vec![1.0, f64::NAN]),
            Err(Error::NonFinite(_))
        ));
        assert!(Matrix::from_rows(&[vec![1.0, 2.0], vec![1.0]]).is_err());
    }

    #[test]
    fn h_norm_examples() {
        let ctx = HNormContext::new(&Matrix::identity(2)).unwrap();
        let v = h_norm(&Matrix::identity(2), &ctx).unwrap();
        assert!((v - 2f64.powf(0.25)).abs() < 1e-12);
        assert_eq!(h_norm(&Matrix::zeros(3, 2), &ctx).unwrap(), 0.0);
        assert!(h_norm(&Matrix::zeros(3, 3), &ctx).is_err());
    }

    #[test]
    fn context_validation() {
        assert!(HNormContext::new(&Matrix::zeros(2, 3)).is_err());
        assert!(HNormContext::new(&Matrix::zeros(2, 2)).is_err());
        let skew = m(&[&[1.0, 0.5], &[0.4, 1.0]]);
        assert!(HNormContext::new(&skew).is_err());
        let nearly = m(&[&[1.0, 0.5], &[0.5 + 1e-13, 1.0]]);
        let ctx = HNormContext::new(&nearly).unwrap();
        assert_eq!(ctx.v().get(0, 1), ctx.v().get(1, 0));
    }

    #[test]
    fn indefinite_weight_is_rejected() {
        let v = m(&[&[1.0, 0.0], &[0.0, -1.0]]);
        let ctx = HNormContext::new(&v).unwrap();
        let x = m(&[&[0.0, 1.0]]);
        assert!(matches!(h_norm(&x, &ctx), Err(Error::InvalidContext(_))));
    }

    #[test]
    fn h_norm_dominated_by_frobenius() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let x = random(&mut rng, 4, 3);
            let w = random(&mut rng, 4, 3);
            let ctx = HNormContext::new(&matrix_inner(&w, &w).unwrap()).unwrap();
            assert!(h_norm(&x, &ctx).unwrap() <= frobenius_norm(&x) + 1e-9);
        }
    }

    fn arb_pair() -> impl Strategy<Value = (Matrix, Matrix, Matrix, f64, f64)> {
        (1usize..5, 1usize..5).prop_flat_map(|(r, c)| {
            let cell = -10.0f64..10.0;
            (
                proptest::collection::vec(cell.clone(), r * c),
                proptest::collection::vec(cell.clone(), r * c),
                proptest::collection::vec(cell, r * c),
                -3.0f64..3.0,
                -3.0f64..3.0,
            )
                .prop_map(move |(a, b, y, l, mu)| {
                    (
                        Matrix::new(r, c, a).unwrap(),
                        Matrix::new(r, c, b).unwrap(),
                        Matrix::new(r, c, y).unwrap(),
                        l,
                        mu,
                    )
                })
        })
    }

    proptest! {
        #[test]
        fn matrix_inner_bilinear((a1, a2, b, l, mu) in arb_pair()) {
            let mut comb = a1.scaled(l);
            comb.axpy(mu, &a2).unwrap();
            let lhs = matrix_inner(&comb, &b).unwrap();
            let mut rhs = matrix_inner(&a1, &b).unwrap().scaled(l);
            rhs.axpy(mu, &matrix_inner(&a2, &b).unwrap()).unwrap();
            let scale = 1.0 + max_norm(&rhs);
            for (x, y) in lhs.as_slice().iter().zip(rhs.as_slice()) {
                prop_assert!((x - y).abs() <= 1e-12 * scale);
            }
        }

        #[test]
        fn h_norm_positive_for_gram_weights((x, w, _b, _l, _mu) in arb_pair()) {
            let v = matrix_inner(&w, &w).unwrap();
            prop_assume!(frobenius_norm(&v) > 1e-6);
            let ctx = HNormContext::new(&v).unwrap();
            let h = h_norm(&x, &ctx).unwrap();
            prop_assert!(h >= 0.0);
            prop_assert!(h <= frobenius_norm(&x) * (1.0 + 1e-12) + 1e-9);
        }
    }
}
