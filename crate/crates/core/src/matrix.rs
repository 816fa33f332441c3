//! Dense row-stochastic and intensity (generator) matrices.
//!
//! Both types validate their defining invariants at construction:
//! a [`StochasticMatrix`] has nonnegative entries and unit row sums,
//! a [`GeneratorMatrix`] has nonnegative off-diagonals and zero row
//! sums. Storage is row-major; indices are 0-based (state `k` of the
//! 1-based state space lives at index `k - 1`).

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatrixError {
    #[error("matrix must have at least one state, got n = {0}")]
    Empty(usize),
    #[error("entry buffer has length {got}, expected {expected} for n = {n}")]
    BadShape { n: usize, expected: usize, got: usize },
    #[error("negative entry {value} at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("row {row} sums to {sum}, expected {expected}")]
    BadRowSum { row: usize, sum: f64, expected: f64 },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
}

fn check_shape<F>(n: usize, entries: &[F]) -> Result<(), MatrixError> {
    if n == 0 {
        return Err(MatrixError::Empty(n));
    }
    if entries.len() != n * n {
        return Err(MatrixError::BadShape { n, expected: n * n, got: entries.len() });
    }
    Ok(())
}

fn flatten_rows<F: Scalar>(rows: Vec<Vec<F>>) -> Result<(usize, Vec<F>), MatrixError> {
    let n = rows.len();
    let mut entries = Vec::with_capacity(n * n);
    for row in &rows {
        if row.len() != n {
            return Err(MatrixError::BadShape { n, expected: n * n, got: row.len() * n });
        }
        entries.extend_from_slice(row);
    }
    Ok((n, entries))
}

fn check_finite<F: Scalar>(n: usize, entries: &[F]) -> Result<(), MatrixError> {
    for (idx, &x) in entries.iter().enumerate() {
        if !x.is_finite() {
            return Err(MatrixError::NonFinite { row: idx / n, col: idx % n });
        }
    }
    Ok(())
}

/// Row-stochastic transition matrix: nonnegative entries, unit row sums.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix<F> {
    n: usize,
    entries: Vec<F>,
}

impl<F: Scalar> StochasticMatrix<F> {
    /// Validates and wraps a row-major entry buffer.
    pub fn new(n: usize, entries: Vec<F>) -> Result<Self, MatrixError> {
        check_shape(n, &entries)?;
        check_finite(n, &entries)?;
        let tol = F::row_sum_tol();
        for i in 0..n {
            let mut sum = F::zero();
            for j in 0..n {
                let x = entries[i * n + j];
                if x < F::zero() {
                    return Err(MatrixError::NegativeEntry {
                        row: i,
                        col: j,
                        value: x.to_f64().unwrap_or(f64::NAN),
                    });
                }
                sum += x;
            }
            if (sum - F::one()).abs() > tol {
                return Err(MatrixError::BadRowSum {
                    row: i,
                    sum: sum.to_f64().unwrap_or(f64::NAN),
                    expected: 1.0,
                });
            }
        }
        Ok(Self { n, entries })
    }

    pub fn from_rows(rows: Vec<Vec<F>>) -> Result<Self, MatrixError> {
        let (n, entries) = flatten_rows(rows)?;
        Self::new(n, entries)
    }

    pub fn identity(n: usize) -> Self {
        let mut entries = vec![F::zero(); n * n];
        for i in 0..n {
            entries[i * n + i] = F::one();
        }
        Self { n, entries }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> F {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn entries(&self) -> &[F] {
        &self.entries
    }

    pub fn to_rows(&self) -> Vec<Vec<F>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    /// Ordered matrix product `self * rhs`.
    ///
    /// Accumulation runs in increasing inner-index order, so the result
    /// is bit-reproducible for identical inputs.
    pub fn multiply(&self, rhs: &Self) -> Result<Self, MatrixError> {
        if self.n != rhs.n {
            return Err(MatrixError::DimensionMismatch { left: self.n, right: rhs.n });
        }
        let n = self.n;
        let mut out = vec![F::zero(); n * n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = F::zero();
                for k in 0..n {
                    acc += self.entries[i * n + k] * rhs.entries[k * n + j];
                }
                out[i * n + j] = acc;
            }
        }
        Self::new(n, out)
    }

    pub fn max_abs_diff(&self, other: &Self) -> F {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(&a, &b)| (a - b).abs())
            .fold(F::zero(), F::max)
    }
}

/// Intensity matrix: nonnegative off-diagonals, zero row sums.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix<F> {
    n: usize,
    entries: Vec<F>,
}

impl<F: Scalar> GeneratorMatrix<F> {
    pub fn new(n: usize, entries: Vec<F>) -> Result<Self, MatrixError> {
        check_shape(n, &entries)?;
        check_finite(n, &entries)?;
        let tol = F::row_sum_tol();
        for i in 0..n {
            let mut sum = F::zero();
            for j in 0..n {
                let x = entries[i * n + j];
                if i != j && x < F::zero() {
                    return Err(MatrixError::NegativeEntry {
                        row: i,
                        col: j,
                        value: x.to_f64().unwrap_or(f64::NAN),
                    });
                }
                sum += x;
            }
            if sum.abs() > tol {
                return Err(MatrixError::BadRowSum {
                    row: i,
                    sum: sum.to_f64().unwrap_or(f64::NAN),
                    expected: 0.0,
                });
            }
        }
        Ok(Self { n, entries })
    }

    pub fn from_rows(rows: Vec<Vec<F>>) -> Result<Self, MatrixError> {
        let (n, entries) = flatten_rows(rows)?;
        Self::new(n, entries)
    }

    /// Builds a generator from off-diagonal rates alone; the diagonal is
    /// filled with the negated off-diagonal row sums. Entries on the
    /// diagonal of `off_diag` are ignored.
    pub fn from_off_diagonal(n: usize, off_diag: Vec<F>) -> Result<Self, MatrixError> {
        check_shape(n, &off_diag)?;
        let mut entries = off_diag;
        for i in 0..n {
            let mut exit = F::zero();
            for j in 0..n {
                if i != j {
                    exit += entries[i * n + j];
                }
            }
            entries[i * n + i] = -exit;
        }
        Self::new(n, entries)
    }

    pub fn zero(n: usize) -> Self {
        Self { n, entries: vec![F::zero(); n * n] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> F {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn entries(&self) -> &[F] {
        &self.entries
    }

    pub fn to_rows(&self) -> Vec<Vec<F>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn max_abs_diff(&self, other: &Self) -> F {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(&a, &b)| (a - b).abs())
            .fold(F::zero(), F::max)
    }

    /// Entrywise scaling `factor * Q`. The result is still a valid
    /// generator for any nonnegative factor.
    pub fn scaled(&self, factor: F) -> Self {
        Self { n: self.n, entries: self.entries.iter().map(|&x| x * factor).collect() }
    }
}

impl<F: Scalar + Serialize> Serialize for StochasticMatrix<F> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_rows().serialize(serializer)
    }
}

impl<'de, F: Scalar + Deserialize<'de>> Deserialize<'de> for StochasticMatrix<F> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<F>>::deserialize(deserializer)?;
        Self::from_rows(rows).map_err(D::Error::custom)
    }
}

impl<F: Scalar + Serialize> Serialize for GeneratorMatrix<F> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_rows().serialize(serializer)
    }
}

impl<'de, F: Scalar + Deserialize<'de>> Deserialize<'de> for GeneratorMatrix<F> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<F>>::deserialize(deserializer)?;
        Self::from_rows(rows).map_err(D::Error::custom)
    }
}
