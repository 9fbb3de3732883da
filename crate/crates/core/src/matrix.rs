//! Sparse complex matrices over the truncated basis.
//!
//! Columns are stored as row-sorted lists with exact zeros dropped. Row and
//! column indices are subset masks.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};

type Column = Vec<(usize, Complex64)>;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixOp {
    dim: usize,
    cols: Vec<Column>,
}

fn compact(col: BTreeMap<usize, Complex64>) -> Column {
    col.into_iter().filter(|(_, v)| *v != ZERO).collect()
}

impl MatrixOp {
    pub fn zeros(dim: usize) -> Self {
        MatrixOp {
            dim,
            cols: vec![Vec::new(); dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(&vec![Complex64::new(1.0, 0.0); dim])
    }

    pub fn diagonal(values: &[Complex64]) -> Self {
        MatrixOp {
            dim: values.len(),
            cols: values
                .iter()
                .enumerate()
                .map(|(i, v)| if *v == ZERO { Vec::new() } else { vec![(i, *v)] })
                .collect(),
        }
    }

    pub fn real_diagonal(values: &[f64]) -> Self {
        let values: Vec<_> = values.iter().map(|v| Complex64::new(*v, 0.0)).collect();
        Self::diagonal(&values)
    }

    /// Builds column by column; `column(c)` returns `(row, value)` pairs.
    pub fn from_columns<F>(dim: usize, column: F) -> Self
    where
        F: Fn(usize) -> Vec<(usize, Complex64)> + Sync,
    {
        let cols = (0..dim)
            .into_par_iter()
            .map(|c| {
                let mut acc = BTreeMap::new();
                for (r, v) in column(c) {
                    assert!(r < dim, "row {r} out of range for dimension {dim}");
                    *acc.entry(r).or_insert(ZERO) += v;
                }
                compact(acc)
            })
            .collect();
        MatrixOp { dim, cols }
    }

    pub fn from_dense(m: &DMatrix<Complex64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        Ok(Self::from_columns(m.ncols(), |c| {
            (0..m.nrows()).map(|r| (r, m[(r, c)])).collect()
        }))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.cols.iter().map(Vec::len).sum()
    }

    pub fn column(&self, c: usize) -> &[(usize, Complex64)] {
        &self.cols[c]
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.cols[c]
            .binary_search_by_key(&r, |(row, _)| *row)
            .map(|i| self.cols[c][i].1)
            .unwrap_or(ZERO)
    }

    /// Copy with `delta` added at `(r, c)`.
    pub fn perturbed(&self, r: usize, c: usize, delta: Complex64) -> Self {
        let mut out = self.clone();
        let mut acc: BTreeMap<usize, Complex64> = out.cols[c].iter().copied().collect();
        *acc.entry(r).or_insert(ZERO) += delta;
        out.cols[c] = compact(acc);
        out
    }

    fn check_dim(&self, other: &MatrixOp) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &MatrixOp) -> Result<Self> {
        self.check_dim(other)?;
        let cols = self
            .cols
            .par_iter()
            .zip(other.cols.par_iter())
            .map(|(a, b)| {
                let mut acc: BTreeMap<usize, Complex64> = a.iter().copied().collect();
                for &(r, v) in b {
                    *acc.entry(r).or_insert(ZERO) += v;
                }
                compact(acc)
            })
            .collect();
        Ok(MatrixOp { dim: self.dim, cols })
    }

    pub fn sub(&self, other: &MatrixOp) -> Result<Self> {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        if factor == ZERO {
            return Self::zeros(self.dim);
        }
        MatrixOp {
            dim: self.dim,
            cols: self
                .cols
                .iter()
                .map(|col| col.iter().map(|&(r, v)| (r, v * factor)).collect())
                .collect(),
        }
    }

    /// `self · other`.
    pub fn mul(&self, other: &MatrixOp) -> Result<Self> {
        self.check_dim(other)?;
        let cols = other
            .cols
            .par_iter()
            .map(|bcol| {
                let mut acc = BTreeMap::new();
                for &(i, b) in bcol {
                    for &(r, a) in &self.cols[i] {
                        *acc.entry(r).or_insert(ZERO) += a * b;
                    }
                }
                compact(acc)
            })
            .collect();
        Ok(MatrixOp { dim: self.dim, cols })
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let mut rows: Vec<Column> = vec![Vec::new(); self.dim];
        for (c, col) in self.cols.iter().enumerate() {
            for &(r, v) in col {
                rows[r].push((c, v.conj()));
            }
        }
        MatrixOp {
            dim: self.dim,
            cols: rows,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.cols.iter().all(Vec::is_empty)
    }

    pub fn max_abs(&self) -> f64 {
        self.cols
            .iter()
            .flatten()
            .map(|(_, v)| v.norm())
            .fold(0.0, f64::max)
    }

    /// `max |A_rc − B_rc|`.
    pub fn max_abs_diff(&self, other: &MatrixOp) -> Result<f64> {
        self.check_dim(other)?;
        Ok(self
            .cols
            .par_iter()
            .zip(other.cols.par_iter())
            .map(|(a, b)| {
                let mut acc: BTreeMap<usize, Complex64> = a.iter().copied().collect();
                for &(r, v) in b {
                    *acc.entry(r).or_insert(ZERO) -= v;
                }
                acc.values().map(|v| v.norm()).fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max))
    }

    /// Max-abs entry difference normalized by `max(1, max |entry|)` over both matrices.
    pub fn residual(&self, other: &MatrixOp) -> Result<f64> {
        let scale = 1f64.max(self.max_abs()).max(other.max_abs());
        Ok(self.max_abs_diff(other)? / scale)
    }

    pub fn apply(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: v.len(),
            });
        }
        let mut out = vec![ZERO; self.dim];
        for (c, col) in self.cols.iter().enumerate() {
            if v[c] == ZERO {
                continue;
            }
            for &(r, a) in col {
                out[r] += a * v[c];
            }
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (c, col) in self.cols.iter().enumerate() {
            for &(r, v) in col {
                m[(r, c)] = v;
            }
        }
        m
    }

    /// `self · x` for a dense square `x`.
    pub fn mul_dense(&self, x: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        assert_eq!(x.nrows(), self.dim);
        let mut out = DMatrix::zeros(self.dim, x.ncols());
        for (i, col) in self.cols.iter().enumerate() {
            for &(r, a) in col {
                for c in 0..x.ncols() {
                    out[(r, c)] += a * x[(i, c)];
                }
            }
        }
        out
    }

    /// `x · self` for a dense square `x`.
    pub fn dense_mul(&self, x: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        assert_eq!(x.ncols(), self.dim);
        let mut out = DMatrix::zeros(x.nrows(), self.dim);
        for (c, col) in self.cols.iter().enumerate() {
            for &(i, a) in col {
                for r in 0..x.nrows() {
                    out[(r, c)] += x[(r, i)] * a;
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn sample() -> MatrixOp {
        MatrixOp::from_columns(3, |col| match col {
            0 => vec![(0, c(1.0)), (2, Complex64::new(0.0, 2.0))],
            1 => vec![(1, c(-1.0))],
            _ => vec![(0, c(3.0)), (1, c(0.5))],
        })
    }

    #[test]
    fn sparse_ops_match_dense() {
        let a = sample();
        let b = a.adjoint().scale(c(2.0)).add(&MatrixOp::identity(3)).unwrap();
        let dense = a.to_dense() * b.to_dense();
        let sparse = a.mul(&b).unwrap().to_dense();
        assert!((dense - sparse).norm() < 1e-14);
        assert_eq!(a.adjoint().to_dense(), a.to_dense().adjoint());
        let x = b.to_dense();
        assert!((a.mul_dense(&x) - a.to_dense() * &x).norm() < 1e-14);
        assert!((a.dense_mul(&x) - &x * a.to_dense()).norm() < 1e-14);
    }

    #[test]
    fn residual_and_perturbation() {
        let a = sample();
        assert_eq!(a.residual(&a).unwrap(), 0.0);
        let p = a.perturbed(1, 0, c(1e-6));
        assert_eq!(p.get(1, 0), c(1e-6));
        assert!((a.max_abs_diff(&p).unwrap() - 1e-6).abs() < 1e-18);
        // normalized by the largest entry (3)
        assert!((a.residual(&p).unwrap() - 1e-6 / 3.0).abs() < 1e-18);
    }

    #[test]
    fn cancellation_drops_entries() {
        let a = sample();
        assert!(a.sub(&a).unwrap().is_zero());
        assert_eq!(a.nnz(), 5);
    }

    #[test]
    fn apply_matches_dense() {
        let a = sample();
        let v = vec![c(1.0), Complex64::new(0.0, 1.0), c(-2.0)];
        let out = a.apply(&v).unwrap();
        let dense = a.to_dense() * nalgebra::DVector::from_vec(v);
        for i in 0..3 {
            assert!((out[i] - dense[i]).norm() < 1e-15);
        }
        assert!(a.apply(&[c(1.0)]).is_err());
    }
}
