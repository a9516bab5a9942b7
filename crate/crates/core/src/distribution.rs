//! Independent categorical distribution over architectures,
//! `p(a) = prod_i softmax(theta_i)[a_i]`.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::supernet::Architecture;
use crate::{EdgeVectors, Error, Result};

/// Numerically stable softmax.
pub fn probabilities(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&t| libm::exp(t - max)).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Shannon entropy in nats; `0 ln 0 = 0`.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs.iter().filter(|&&p| p > 0.0).map(|&p| p * libm::log(p)).sum::<f64>()
}

/// Lowest index attaining the maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = j;
        }
    }
    best
}

/// Draws an index from `probs` by inverting the CDF.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    // Rounding left the CDF short of 1; fall back to the last reachable index.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Per-edge logits `theta_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DistributionParams(EdgeVectors);

impl DistributionParams {
    /// Every logit set to `value` (uniform distribution).
    pub fn constant(sizes: &[usize], value: f64) -> Self {
        Self(EdgeVectors::filled(sizes, value))
    }

    /// All-ones initialization.
    pub fn uniform(sizes: &[usize]) -> Self {
        Self::constant(sizes, 1.0)
    }

    pub fn from_logits(logits: Vec<Vec<f64>>) -> Result<Self> {
        if logits.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("logits must be finite".into()));
        }
        Ok(Self(EdgeVectors::try_from(logits)?))
    }

    pub fn num_edges(&self) -> usize {
        self.0.num_edges()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.0.sizes()
    }

    pub fn logits(&self, slot: usize) -> &[f64] {
        self.0.edge(slot)
    }

    pub fn logits_mut(&mut self, slot: usize) -> &mut [f64] {
        self.0.edge_mut(slot)
    }

    pub fn as_vectors(&self) -> &EdgeVectors {
        &self.0
    }

    pub fn as_vectors_mut(&mut self) -> &mut EdgeVectors {
        &mut self.0
    }

    pub fn probabilities(&self, slot: usize) -> Vec<f64> {
        probabilities(self.0.edge(slot))
    }

    /// `mu(theta)` for all edges.
    pub fn mixture(&self) -> EdgeVectors {
        EdgeVectors::from_nested(self.0.edges().map(probabilities).collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Architecture {
        Architecture::new(self.0.edges().map(|t| sample_index(&probabilities(t), rng)).collect())
    }

    /// Probability of `arch`.
    pub fn prob(&self, arch: &Architecture) -> f64 {
        self.0.edges().zip(arch.choices()).map(|(t, &c)| probabilities(t)[c]).product()
    }

    /// `a_i - mu_i(theta_i)` for every edge.
    pub fn log_prob_grad(&self, arch: &Architecture) -> Result<EdgeVectors> {
        arch.validate(&self.sizes())?;
        let mut g = self.0.zeros_like();
        for slot in 0..self.num_edges() {
            let mu = self.probabilities(slot);
            let out = g.edge_mut(slot);
            for (o, m) in out.iter_mut().zip(&mu) {
                *o = -m;
            }
            out[arch.choice(slot)] += 1.0;
        }
        Ok(g)
    }

    /// Mean per-edge entropy (nats).
    pub fn entropy_mean(&self) -> f64 {
        let n = self.num_edges();
        if n == 0 {
            return 0.0;
        }
        self.0.edges().map(|t| entropy(&probabilities(t))).sum::<f64>() / n as f64
    }

    /// Most probable candidate per edge, lowest index on ties.
    pub fn argmax_architecture(&self) -> Architecture {
        Architecture::new(self.0.edges().map(|t| argmax(&probabilities(t))).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.0.is_finite()
    }
}
