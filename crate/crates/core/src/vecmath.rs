//! Dense `f64` vectors with the entrywise conventions used by the optimizers.
//!
//! `sqrt`, squaring and `max` act coordinatewise. All reductions sum
//! sequentially in index order so results are reproducible bit-for-bit.

use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A non-empty vector of 64-bit floats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyVector);
        }
        Ok(Vector(data))
    }

    /// # Panics
    /// If `dim == 0`.
    pub fn zeros(dim: usize) -> Self {
        Self::filled(dim, 0.0)
    }

    /// # Panics
    /// If `dim == 0`.
    pub fn filled(dim: usize, value: f64) -> Self {
        assert!(dim > 0, "vector dimension must be positive");
        Vector(vec![value; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn ensure_same_dim(&self, other: &Vector) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        Ok(())
    }

    /// Returns `NonFinite` naming `what` if any entry is NaN or infinite.
    pub fn ensure_finite(&self, what: &'static str) -> Result<()> {
        match self.0.iter().position(|x| !x.is_finite()) {
            Some(index) => Err(Error::NonFinite { what, index }),
            None => Ok(()),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Vector {
        Vector(self.0.iter().map(|&x| f(x)).collect())
    }

    pub fn zip_map(&self, other: &Vector, f: impl Fn(f64, f64) -> f64) -> Result<Vector> {
        self.ensure_same_dim(other)?;
        Ok(Vector(
            self.0.iter().zip(&other.0).map(|(&a, &b)| f(a, b)).collect(),
        ))
    }

    /// Entrywise square root. Fails on any negative entry, which would
    /// indicate corrupted moment state.
    pub fn elementwise_sqrt(&self) -> Result<Vector> {
        if let Some((index, &value)) = self.0.iter().enumerate().find(|(_, &x)| x < 0.0) {
            return Err(Error::NegativeElement { index, value });
        }
        Ok(self.map(f64::sqrt))
    }

    pub fn elementwise_square(&self) -> Vector {
        self.map(|x| x * x)
    }

    pub fn elementwise_max(&self, other: &Vector) -> Result<Vector> {
        self.zip_map(other, f64::max)
    }

    pub fn dot(&self, other: &Vector) -> Result<f64> {
        self.ensure_same_dim(other)?;
        Ok(self.0.iter().zip(&other.0).fold(0.0, |acc, (a, b)| acc + a * b))
    }

    pub fn norm_l2(&self) -> f64 {
        self.0.iter().fold(0.0, |acc, x| acc + x * x).sqrt()
    }

    pub fn norm_linf(&self) -> f64 {
        self.0.iter().fold(0.0, |acc: f64, x| acc.max(x.abs()))
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().fold(0.0, |acc, x| acc + x)
    }

    pub fn min_value(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl Index<usize> for Vector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl TryFrom<Vec<f64>> for Vector {
    type Error = Error;

    fn try_from(data: Vec<f64>) -> Result<Self> {
        Vector::new(data)
    }
}

impl From<Vector> for Vec<f64> {
    fn from(v: Vector) -> Self {
        v.0
    }
}

impl<'a> IntoIterator for &'a Vector {
    type Item = &'a f64;
    type IntoIter = std::slice::Iter<'a, f64>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}
