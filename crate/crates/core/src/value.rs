use std::ops::{Deref, Index};

use serde::{Deserialize, Serialize};

use crate::error::{DpError, Result};

/// Real-valued function over the states, stored densely.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ValueFunction(pub Vec<f64>);

impl ValueFunction {
    pub fn new(values: Vec<f64>) -> Self {
        ValueFunction(values)
    }

    pub fn zeros(n: usize) -> Self {
        ValueFunction(vec![0.0; n])
    }

    pub fn constant(n: usize, c: f64) -> Self {
        ValueFunction(vec![c; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// `self + c·1`.
    pub fn shifted(&self, c: f64) -> Self {
        ValueFunction(self.0.iter().map(|v| v + c).collect())
    }

    pub fn sub(&self, other: &ValueFunction) -> ValueFunction {
        ValueFunction(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Componentwise `self <= other + tol`.
    pub fn le_within(&self, other: &ValueFunction, tol: f64) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| *a <= *b + tol)
    }

    pub fn max_abs_diff(&self, other: &ValueFunction) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Deref for ValueFunction {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl Index<usize> for ValueFunction {
    type Output = f64;

    fn index(&self, x: usize) -> &f64 {
        &self.0[x]
    }
}

impl From<Vec<f64>> for ValueFunction {
    fn from(v: Vec<f64>) -> Self {
        ValueFunction(v)
    }
}

/// Strictly positive state weights `v` defining `‖J‖ = max_x |J(x)| / v(x)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        for (index, &value) in weights.iter().enumerate() {
            if !(value > 0.0) || !value.is_finite() {
                return Err(DpError::NonPositiveWeight { index, value });
            }
        }
        Ok(WeightVector(weights))
    }

    pub fn ones(n: usize) -> Self {
        WeightVector(vec![1.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Weighted sup-norm of `j`. Lengths must agree.
    pub fn norm(&self, j: &[f64]) -> f64 {
        debug_assert_eq!(j.len(), self.0.len());
        j.iter()
            .zip(&self.0)
            .map(|(v, w)| v.abs() / w)
            .fold(0.0, f64::max)
    }

    /// Weighted sup-norm of `a - b`.
    pub fn dist(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .zip(&self.0)
            .map(|((x, y), w)| (x - y).abs() / w)
            .fold(0.0, f64::max)
    }
}

impl<'de> Deserialize<'de> for WeightVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = Vec::<f64>::deserialize(d)?;
        WeightVector::new(raw).map_err(serde::de::Error::custom)
    }
}

/// `max_x |J(x)| / v(x)`, rejecting mismatched lengths and nonpositive weights.
pub fn weighted_sup_norm(j: &[f64], v: &[f64]) -> Result<f64> {
    if j.len() != v.len() {
        return Err(DpError::LengthMismatch {
            expected: v.len(),
            found: j.len(),
        });
    }
    for (index, &value) in v.iter().enumerate() {
        if !(value > 0.0) {
            return Err(DpError::NonPositiveWeight { index, value });
        }
    }
    Ok(j.iter()
        .zip(v)
        .map(|(a, w)| a.abs() / w)
        .fold(0.0, f64::max))
}
