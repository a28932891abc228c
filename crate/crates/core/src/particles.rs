use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_dim, Error, Result};

/// An ordered set of `count` points in `dim`-dimensional space, stored
/// row-major.
///
/// Every coordinate is finite; constructors reject NaN and infinities.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    dim: usize,
    data: Vec<f64>,
}

impl ParticleSet {
    /// Builds a set from row-major coordinates.
    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter {
                name: "dim",
                reason: "must be at least 1",
            });
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::ShapeMismatch {
                expected: data.len() / dim * dim,
                found: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / dim,
                col: pos % dim,
            });
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows.first().ok_or(Error::Empty("rows"))?;
        let dim = first.as_ref().len();
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            check_dim(dim, row.as_ref().len())?;
            data.extend_from_slice(row.as_ref());
        }
        Self::from_flat(dim, data)
    }

    /// `count` points at the origin.
    pub fn zeros(count: usize, dim: usize) -> Self {
        assert!(dim > 0, "dimension must be at least 1");
        Self {
            dim,
            data: vec![0.0; count * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> core::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn rows_mut(&mut self) -> core::slice::ChunksExactMut<'_, f64> {
        self.data.chunks_exact_mut(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.data
    }

    /// Mutable access to the raw coordinates. Callers must keep them finite.
    pub(crate) fn as_flat_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Gathers the rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            dim: self.dim,
            data,
        }
    }

    /// Column means.
    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for row in self.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        let n = self.len().max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }

    /// Shifts every point by `offset`.
    pub fn translate(&mut self, offset: &[f64]) -> Result<()> {
        check_dim(self.dim, offset.len())?;
        for row in self.data.chunks_exact_mut(self.dim) {
            for (v, o) in row.iter_mut().zip(offset) {
                *v += o;
            }
        }
        self.ensure_finite()
    }

    /// Elementwise `self + scale * other`.
    pub fn add_scaled(&self, other: &ParticleSet, scale: f64) -> Result<Self> {
        self.check_same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + scale * b)
            .collect();
        Self::from_flat(self.dim, data)
    }

    /// Elementwise `self * factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub(crate) fn check_same_shape(&self, other: &ParticleSet) -> Result<()> {
        check_dim(self.dim, other.dim)?;
        if self.len() != other.len() {
            return Err(Error::ShapeMismatch {
                expected: self.len(),
                found: other.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn ensure_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(pos) => Err(Error::NonFinite {
                row: pos / self.dim,
                col: pos % self.dim,
            }),
            None => Ok(()),
        }
    }
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}
