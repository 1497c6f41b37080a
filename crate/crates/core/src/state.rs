//! Flat real-valued state vectors.

use std::ops::Index;

use crate::error::{Error, Result};

/// A point `x_t` in `R^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVec(Vec<f64>);

impl StateVec {
    /// Builds a state, rejecting empty or non-finite data.
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Argument("state vector must have dimension >= 1".into()));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Argument(format!("state entry {i} is not finite")));
        }
        Ok(Self(data))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    /// Unchecked constructor for results of arithmetic on valid states.
    pub(crate) fn from_raw(data: Vec<f64>) -> Self {
        Self(data)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&self, a: f64) -> Self {
        Self(self.0.iter().map(|v| a * v).collect())
    }

    /// `a * self + b * other`.
    pub fn lin_comb(&self, a: f64, other: &Self, b: f64) -> Self {
        debug_assert_eq!(self.dim(), other.dim());
        Self(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        )
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: f64, other: &Self) -> Self {
        debug_assert_eq!(self.dim(), other.dim());
        Self(self.0.iter().zip(&other.0).map(|(x, y)| x + a * y).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim(), other.dim());
        Self(self.0.iter().zip(&other.0).map(|(x, y)| x - y).collect())
    }

    pub fn distance(&self, other: &Self) -> f64 {
        self.sub(other).norm()
    }

    pub(crate) fn check_dim(&self, other: &Self, what: &str) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::Argument(format!(
                "{what}: dimension mismatch ({} vs {})",
                self.dim(),
                other.dim()
            )));
        }
        Ok(())
    }
}

impl Index<usize> for StateVec {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl TryFrom<Vec<f64>> for StateVec {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl<const N: usize> TryFrom<[f64; N]> for StateVec {
    type Error = Error;

    fn try_from(v: [f64; N]) -> Result<Self> {
        Self::new(v.to_vec())
    }
}
