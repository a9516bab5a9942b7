use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A ragged collection of per-edge real vectors stored in one flat buffer.
///
/// Distribution parameters, gradient estimates and EMA tables all share this
/// layout, so optimizers can treat them as a single flat parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct EdgeVectors {
    data: Vec<f64>,
    offsets: Vec<usize>,
}

impl EdgeVectors {
    pub fn filled(sizes: &[usize], value: f64) -> Self {
        let mut offsets = Vec::with_capacity(sizes.len() + 1);
        offsets.push(0);
        for &s in sizes {
            offsets.push(offsets.last().unwrap() + s);
        }
        let total = *offsets.last().unwrap();
        Self { data: vec![value; total], offsets }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        Self::filled(sizes, 0.0)
    }

    pub fn from_nested(rows: Vec<Vec<f64>>) -> Self {
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        offsets.push(0);
        let mut data = Vec::new();
        for row in rows {
            data.extend_from_slice(&row);
            offsets.push(data.len());
        }
        Self { data, offsets }
    }

    /// Same layout as `self`, all zeros.
    pub fn zeros_like(&self) -> Self {
        Self { data: vec![0.0; self.data.len()], offsets: self.offsets.clone() }
    }

    pub fn num_edges(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.offsets.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn edge(&self, i: usize) -> &[f64] {
        &self.data[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn edge_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn edges(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.offsets.windows(2).map(move |w| &self.data[w[0]..w[1]])
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn as_flat_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.offsets == other.offsets
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self += scale * other`; layouts must agree.
    pub fn add_scaled(&mut self, other: &Self, scale: f64) -> Result<()> {
        if !self.same_layout(other) {
            return Err(Error::InvalidParams("per-edge layouts differ".into()));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
        Ok(())
    }

    pub fn to_nested(&self) -> Vec<Vec<f64>> {
        self.edges().map(|e| e.to_vec()).collect()
    }
}

impl From<EdgeVectors> for Vec<Vec<f64>> {
    fn from(v: EdgeVectors) -> Self {
        v.to_nested()
    }
}

impl TryFrom<Vec<Vec<f64>>> for EdgeVectors {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.iter().any(|r| r.is_empty()) {
            return Err(Error::InvalidParams("empty per-edge vector".into()));
        }
        Ok(Self::from_nested(rows))
    }
}
