//! Policy-gradient estimators for the architecture parameters.
//!
//! All estimators return per-edge ascent directions for `J(theta)`, laid out
//! like the distribution parameters (one vector per searchable edge).

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::distribution::{argmax, probabilities, DistributionParams};
use crate::supernet::{
    dense_reward_pass, forward_edge_zeroed, minibatch_reward, sparse_reward_pass, Architecture, EdgeTaps, PassCost,
    PassOptions, RewardKind, SupernetSpec, WeightStore,
};
use crate::{EdgeVectors, Error, Result};

/// Default decay of both the REINFORCE baseline and the zero-op EMA table.
pub const DEFAULT_DECAY: f64 = 0.05;

#[derive(Clone, Debug, PartialEq)]
pub struct GradientEstimate(pub EdgeVectors);

impl GradientEstimate {
    pub fn edge(&self, slot: usize) -> &[f64] {
        self.0.edge(slot)
    }

    pub fn as_flat(&self) -> &[f64] {
        self.0.as_flat()
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.norm_sq()
    }

    pub fn is_finite(&self) -> bool {
        self.0.is_finite()
    }

    /// First slot holding a non-finite entry.
    pub fn first_non_finite_edge(&self) -> Option<usize> {
        self.0.edges().position(|e| e.iter().any(|v| !v.is_finite()))
    }
}

/// Per-edge scalar advantages `A_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdvantageVector(pub Vec<f64>);

/// Scalar EMA baseline `b` for REINFORCE.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BaselineState {
    pub value: f64,
    pub decay: f64,
}

impl BaselineState {
    pub fn new(decay: f64) -> Self {
        Self { value: 0.0, decay }
    }

    pub fn update(&mut self, reward: f64) {
        self.value += self.decay * (reward - self.value);
    }
}

/// Per-(edge, candidate) moving averages of advantages, used to give the
/// zero operation a non-zero advantage.
#[derive(Clone, Debug, PartialEq)]
pub struct EmaTable {
    values: EdgeVectors,
    decay: f64,
    zero_index: Vec<Option<usize>>,
}

impl EmaTable {
    pub fn new(sizes: &[usize], zero_index: Vec<Option<usize>>, decay: f64) -> Self {
        Self { values: EdgeVectors::zeros(sizes), decay, zero_index }
    }

    pub fn for_spec(spec: &SupernetSpec, decay: f64) -> Self {
        Self::new(&spec.choice_sizes(), spec.zero_candidates(), decay)
    }

    pub fn values(&self) -> &EdgeVectors {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut EdgeVectors {
        &mut self.values
    }
}

/// `(r - b)(a_i - mu_i)` per edge, then `b <- b + decay (r - b)`.
pub fn reinforce_estimate(
    reward: f64,
    baseline: &mut BaselineState,
    theta: &DistributionParams,
    arch: &Architecture,
) -> Result<GradientEstimate> {
    let mut g = theta.log_prob_grad(arch)?;
    let scale = reward - baseline.value;
    g.as_flat_mut().iter_mut().for_each(|v| *v *= scale);
    baseline.update(reward);
    Ok(GradientEstimate(g))
}

/// `A_i = r(a) - r((s_i, 0))` from precomputed zeroed-edge rewards.
pub fn advantage_exact(arch: &Architecture, reward: f64, zeroed_rewards: &[Option<f64>]) -> Result<AdvantageVector> {
    (0..arch.len())
        .map(|slot| {
            zeroed_rewards.get(slot).copied().flatten().map(|z| reward - z).ok_or(Error::MissingZeroedReward(slot))
        })
        .collect::<Result<Vec<_>>>()
        .map(AdvantageVector)
}

/// `A_i = <dr/dO_i, O_i^j>` from the taps of one sparse forward/backward.
pub fn advantage_approx(taps: &EdgeTaps, searchable_edges: &[usize]) -> Result<AdvantageVector> {
    searchable_edges
        .iter()
        .map(|&e| {
            let out = taps.output(e).ok_or(Error::MissingTapGradient(e))?;
            let grad = taps.grad(e).ok_or(Error::MissingTapGradient(e))?;
            out.dot(grad)
        })
        .collect::<Result<Vec<_>>>()
        .map(AdvantageVector)
}

/// Updates the EMA table with the sampled advantages, then replaces the
/// advantage of every sampled zero operation by the smallest EMA among the
/// edge's other candidates.
pub fn zero_op_adjust(ema: &mut EmaTable, adv: &AdvantageVector, arch: &Architecture) -> AdvantageVector {
    let decay = ema.decay;
    for (slot, &a) in adv.0.iter().enumerate() {
        let j = arch.choice(slot);
        let cell = &mut ema.values.edge_mut(slot)[j];
        *cell += decay * (a - *cell);
    }
    let mut out = adv.0.clone();
    for (slot, value) in out.iter_mut().enumerate() {
        let Some(zero) = ema.zero_index[slot] else { continue };
        if arch.choice(slot) != zero {
            continue;
        }
        let worst = ema
            .values
            .edge(slot)
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != zero)
            .map(|(_, v)| *v)
            .fold(f64::INFINITY, f64::min);
        if worst.is_finite() {
            *value = worst;
        }
    }
    AdvantageVector(out)
}

/// `A_i (a_i - mu_i)` per edge.
pub fn policy_gradient_from_advantages(
    adv: &AdvantageVector,
    theta: &DistributionParams,
    arch: &Architecture,
) -> Result<GradientEstimate> {
    let mut g = theta.log_prob_grad(arch)?;
    if adv.0.len() != g.num_edges() {
        return Err(Error::InvalidArchitecture("advantage count differs from edge count".into()));
    }
    for (slot, &a) in adv.0.iter().enumerate() {
        g.edge_mut(slot).iter_mut().for_each(|v| *v *= a);
    }
    Ok(GradientEstimate(g))
}

/// Reward of `arch` and its exact per-edge advantages; costs one forward
/// plus one per searchable edge.
pub fn exact_advantages(
    spec: &SupernetSpec,
    weights: &WeightStore,
    arch: &Architecture,
    batch: &Tensor,
    targets: Option<&Tensor>,
    kind: RewardKind,
) -> Result<(f64, AdvantageVector, PassCost)> {
    let pass = sparse_reward_pass(spec, weights, arch, batch, targets, kind, PassOptions::default())?;
    let mut cost = pass.cost;
    let mut zeroed = Vec::with_capacity(arch.len());
    for &e in spec.searchable_edges() {
        let y = forward_edge_zeroed(spec, weights, arch, e, batch)?;
        cost.forwards += 1;
        cost.evals.searchable += spec.searchable_edges().len() - 1;
        cost.evals.fixed += pass.cost.evals.fixed;
        zeroed.push(Some(minibatch_reward(&y, targets, kind)?));
    }
    Ok((pass.reward, advantage_exact(arch, pass.reward, &zeroed)?, cost))
}

/// Reward of `arch` and its first-order advantages from a single
/// forward/backward pass.
pub fn approx_advantages(
    spec: &SupernetSpec,
    weights: &WeightStore,
    arch: &Architecture,
    batch: &Tensor,
    targets: Option<&Tensor>,
    kind: RewardKind,
) -> Result<(f64, AdvantageVector, PassCost)> {
    let opts = PassOptions { taps: true, weight_grads: false };
    let pass = sparse_reward_pass(spec, weights, arch, batch, targets, kind, opts)?;
    Ok((pass.reward, advantage_approx(&pass.taps, spec.searchable_edges())?, pass.cost))
}

/// Exact gradient of the relaxed (mixture) reward w.r.t. theta, chained
/// through the softmax Jacobian. Returns the relaxed reward as well.
pub fn dense_softmax_gradient(
    spec: &SupernetSpec,
    weights: &WeightStore,
    theta: &DistributionParams,
    batch: &Tensor,
    targets: Option<&Tensor>,
    kind: RewardKind,
) -> Result<(f64, GradientEstimate, PassCost)> {
    let mixture = theta.mixture();
    let pass = dense_reward_pass(spec, weights, &mixture, batch, targets, kind)?;
    let mut g = mixture.zeros_like();
    for slot in 0..mixture.num_edges() {
        let mu = mixture.edge(slot);
        let dm = pass.mixture_grads.edge(slot);
        let mean: f64 = mu.iter().zip(dm).map(|(m, d)| m * d).sum();
        for ((o, m), d) in g.edge_mut(slot).iter_mut().zip(mu).zip(dm) {
            *o = m * (d - mean);
        }
    }
    Ok((pass.reward, GradientEstimate(g), pass.cost))
}

fn standard_gumbel<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return -libm::log(-libm::log(u));
        }
    }
}

/// Hard Gumbel-max sample and the tempered soft probabilities
/// `softmax((theta + g) / temperature)` of each edge.
pub fn gumbel_hard_sample<R: Rng + ?Sized>(
    theta: &DistributionParams,
    temperature: f64,
    rng: &mut R,
) -> Result<(Architecture, EdgeVectors)> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::InvalidTemperature(temperature));
    }
    let mut choices = Vec::with_capacity(theta.num_edges());
    let mut soft = Vec::with_capacity(theta.num_edges());
    for slot in 0..theta.num_edges() {
        let perturbed: Vec<f64> = theta.logits(slot).iter().map(|t| t + standard_gumbel(rng)).collect();
        choices.push(argmax(&perturbed));
        let scaled: Vec<f64> = perturbed.iter().map(|v| v / temperature).collect();
        soft.push(probabilities(&scaled));
    }
    Ok((Architecture::new(choices), EdgeVectors::from_nested(soft)))
}

/// GDAS-like straight-through comparator.
///
/// The hard architecture is evaluated sparsely. Edge `i`'s reward gradient
/// w.r.t. its sampled mixing weight, `<dr/dO_i, O_i^j>`, lands on the sampled
/// slot only and is then chained through the tempered softmax Jacobian.
#[allow(clippy::too_many_arguments)]
pub fn gumbel_st_estimate<R: Rng + ?Sized>(
    spec: &SupernetSpec,
    weights: &WeightStore,
    theta: &DistributionParams,
    temperature: f64,
    rng: &mut R,
    batch: &Tensor,
    targets: Option<&Tensor>,
    kind: RewardKind,
) -> Result<(Architecture, f64, GradientEstimate, PassCost)> {
    let (arch, soft) = gumbel_hard_sample(theta, temperature, rng)?;
    let (reward, adv, cost) = approx_advantages(spec, weights, &arch, batch, targets, kind)?;
    let mut g = soft.zeros_like();
    for (slot, &a) in adv.0.iter().enumerate() {
        let p = soft.edge(slot);
        let j = arch.choice(slot);
        for (k, o) in g.edge_mut(slot).iter_mut().enumerate() {
            let jac = if k == j { p[j] * (1.0 - p[j]) } else { -p[j] * p[k] };
            *o = a * jac / temperature;
        }
    }
    Ok((arch, reward, GradientEstimate(g), cost))
}

/// Search strategies selectable from configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Reinforce,
    AdvantageExact,
    AdvantageApprox,
    DenseSoftmax,
    GumbelSt,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 5] = [
        EstimatorKind::Reinforce,
        EstimatorKind::AdvantageExact,
        EstimatorKind::AdvantageApprox,
        EstimatorKind::DenseSoftmax,
        EstimatorKind::GumbelSt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Reinforce => "reinforce",
            EstimatorKind::AdvantageExact => "advantage_exact",
            EstimatorKind::AdvantageApprox => "advantage_approx",
            EstimatorKind::DenseSoftmax => "dense_softmax",
            EstimatorKind::GumbelSt => "gumbel_st",
        }
    }

    /// Human-facing label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            EstimatorKind::Reinforce => "REINFORCE",
            EstimatorKind::AdvantageExact => "AdvantageNAS (exact)",
            EstimatorKind::AdvantageApprox => "AdvantageNAS",
            EstimatorKind::DenseSoftmax => "DARTS-like (dense)",
            EstimatorKind::GumbelSt => "GDAS-like",
        }
    }

    pub fn uses_advantages(self) -> bool {
        matches!(self, EstimatorKind::AdvantageExact | EstimatorKind::AdvantageApprox)
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Self::ALL.iter().map(|k| k.name()).collect();
            Error::InvalidConfig(alloc::format!("unknown strategy {s:?}; expected one of {}", names.join(", ")))
        })
    }
}

impl From<EstimatorKind> for String {
    fn from(k: EstimatorKind) -> Self {
        k.name().into()
    }
}
