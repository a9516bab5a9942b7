//! Exact checks by exhaustive enumeration over the architecture space.
//!
//! Every quantity here is an exact expectation under `p_theta`, so the
//! checks compare numbers that should agree up to rounding.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::RangeInclusive;

use rand::Rng;

use serde::{Deserialize, Serialize};

use crate::distribution::DistributionParams;
use crate::estimators::{
    approx_advantages, exact_advantages, policy_gradient_from_advantages, reinforce_estimate, AdvantageVector,
    BaselineState,
};
use crate::supernet::{Architecture, RewardKind};
use crate::tasks::{enumerate_expectation, for_each_architecture, linear_exact_gradient, LinearRewardTask, LinearSupernet};
use crate::{EdgeVectors, Error, Result};

/// Tolerance of the unbiasedness check.
pub const UNBIASED_TOLERANCE: f64 = 1e-10;
/// Slack allowed below the improvement bound.
pub const BOUND_SLACK: f64 = 1e-10;

/// Estimators whose output is a pure function of the sampled architecture.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentEstimator {
    /// REINFORCE with the baseline fixed at zero.
    Reinforce,
    AdvantageExact,
    AdvantageApprox,
    /// Exact advantages plus a term that depends on the sampled choice.
    /// Biased on purpose; used as a negative control.
    CorruptedAdvantage,
}

/// Evaluates estimators on the supernet realization of a linear task.
pub struct EstimatorOracle<'a> {
    task: &'a LinearRewardTask,
    net: LinearSupernet,
}

impl<'a> EstimatorOracle<'a> {
    pub fn new(task: &'a LinearRewardTask) -> Self {
        Self { task, net: task.to_supernet() }
    }

    pub fn advantages(&self, kind: MomentEstimator, arch: &Architecture) -> Result<AdvantageVector> {
        let net = &self.net;
        match kind {
            MomentEstimator::Reinforce => {
                Ok(AdvantageVector(vec![self.task.linear_reward(arch); arch.len()]))
            }
            MomentEstimator::AdvantageExact => {
                Ok(exact_advantages(&net.spec, &net.weights, arch, &net.batch, None, RewardKind::Linear)?.1)
            }
            MomentEstimator::AdvantageApprox => {
                Ok(approx_advantages(&net.spec, &net.weights, arch, &net.batch, None, RewardKind::Linear)?.1)
            }
            MomentEstimator::CorruptedAdvantage => {
                let mut a = self.advantages(MomentEstimator::AdvantageExact, arch)?;
                for (slot, v) in a.0.iter_mut().enumerate() {
                    *v += 0.5 * (arch.choice(slot) + 1) as f64;
                }
                Ok(a)
            }
        }
    }

    /// `delta(a)` for the given estimator.
    pub fn estimate(&self, kind: MomentEstimator, theta: &DistributionParams, arch: &Architecture) -> Result<EdgeVectors> {
        match kind {
            MomentEstimator::Reinforce => {
                let mut b = BaselineState::new(0.0);
                Ok(reinforce_estimate(self.task.linear_reward(arch), &mut b, theta, arch)?.0)
            }
            _ => Ok(policy_gradient_from_advantages(&self.advantages(kind, arch)?, theta, arch)?.0),
        }
    }
}

/// Exact moments of one edge's estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeMoments {
    pub mean: Vec<f64>,
    /// `E ||delta_i||^2`.
    pub second_moment: f64,
    /// `E ||delta_i||^2 - ||E delta_i||^2`.
    pub variance: f64,
    pub exact_gradient: Vec<f64>,
    pub gradient_norm_sq: f64,
    /// `||E delta_i - grad_i J||`.
    pub mean_discrepancy: f64,
    /// Closed forms as printed in the source analysis. They are reported,
    /// not trusted: the gradient norm disagrees with enumeration in general,
    /// and the advantage "variance" equals the second moment above.
    pub printed_gradient_norm_sq: f64,
    pub printed_adv_variance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub estimator: MomentEstimator,
    pub edges: Vec<EdgeMoments>,
    /// `||E delta - grad J||` over all edges.
    pub mean_discrepancy: f64,
}

pub fn estimator_moments(
    task: &LinearRewardTask,
    theta: &DistributionParams,
    kind: MomentEstimator,
) -> Result<MomentReport> {
    let oracle = EstimatorOracle::new(task);
    let sizes = theta.sizes();
    let mut mean = EdgeVectors::zeros(&sizes);
    let mut second = vec![0.0; sizes.len()];
    for_each_architecture(theta, |a, p| {
        let d = oracle.estimate(kind, theta, a)?;
        mean.add_scaled(&d, p)?;
        for (s, e) in second.iter_mut().zip(d.edges()) {
            *s += p * e.iter().map(|v| v * v).sum::<f64>();
        }
        Ok(())
    })?;
    let exact = linear_exact_gradient(task, theta)?;
    let mut total_disc = 0.0;
    let edges = (0..sizes.len())
        .map(|i| {
            let m = mean.edge(i);
            let g = exact.edge(i);
            let disc_sq: f64 = m.iter().zip(g).map(|(a, b)| (a - b) * (a - b)).sum();
            total_disc += disc_sq;
            let mu = theta.probabilities(i);
            let r = task.rewards().edge(i);
            let mu_sq: f64 = mu.iter().map(|m| m * m).sum();
            EdgeMoments {
                mean: m.to_vec(),
                second_moment: second[i],
                variance: second[i] - m.iter().map(|v| v * v).sum::<f64>(),
                exact_gradient: g.to_vec(),
                gradient_norm_sq: g.iter().map(|v| v * v).sum(),
                mean_discrepancy: libm::sqrt(disc_sq),
                printed_gradient_norm_sq: r.iter().zip(&mu).map(|(r, m)| r * r * m * m * (1.0 - m) * (1.0 - m)).sum(),
                printed_adv_variance: r.iter().zip(&mu).map(|(r, m)| m * r * r * (1.0 - 2.0 * m + mu_sq)).sum(),
            }
        })
        .collect();
    Ok(MomentReport { estimator: kind, edges, mean_discrepancy: libm::sqrt(total_disc) })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnbiasednessResult {
    pub discrepancy: f64,
    pub passed: bool,
}

/// Passes iff `||E delta - grad J|| <= 1e-10`, both sides by enumeration.
pub fn unbiasedness_check(
    task: &LinearRewardTask,
    theta: &DistributionParams,
    kind: MomentEstimator,
) -> Result<UnbiasednessResult> {
    let oracle = EstimatorOracle::new(task);
    let mut mean = EdgeVectors::zeros(&theta.sizes());
    for_each_architecture(theta, |a, p| mean.add_scaled(&oracle.estimate(kind, theta, a)?, p))?;
    let mut score = EdgeVectors::zeros(&theta.sizes());
    for_each_architecture(theta, |a, p| score.add_scaled(&theta.log_prob_grad(a)?, p * task.linear_reward(a)))?;
    let discrepancy = libm::sqrt(mean.as_flat().iter().zip(score.as_flat()).map(|(a, b)| (a - b) * (a - b)).sum());
    Ok(UnbiasednessResult { discrepancy, passed: discrepancy <= UNBIASED_TOLERANCE })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub epsilon: f64,
    /// `E log J(theta + eps delta) - log J(theta)`.
    pub lhs: f64,
    /// `(eps/J) ||grad J||^2 - (eps^2/2) E ||delta||^2`, equal to the
    /// variance form `(eps/J - eps^2/2) ||grad J||^2 - (eps^2/2) Var`.
    pub rhs: f64,
    /// `(eps/J - eps^2/2) ||grad J||^2 - (eps^2/2) E ||delta||^2`, a weaker
    /// bound implied by `rhs`.
    pub rhs_loose: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub objective: f64,
    pub gradient_norm_sq: f64,
    pub second_moment: f64,
    pub variance: f64,
    pub rows: Vec<BoundRow>,
    pub passed: bool,
    /// Whether every row with a positive bound also had a positive gain.
    pub monotone: bool,
}

/// Expected log-improvement after one step `theta + eps delta`, against
/// the lower bound, for each step size.
pub fn improvement_bound_check(
    task: &LinearRewardTask,
    theta: &DistributionParams,
    kind: MomentEstimator,
    epsilons: &[f64],
) -> Result<BoundReport> {
    let mut worst = f64::INFINITY;
    for_each_architecture(theta, |a, _| {
        worst = worst.min(task.linear_reward(a));
        Ok(())
    })?;
    if !(worst > 0.0) {
        return Err(Error::NonPositiveReward(worst));
    }
    let oracle = EstimatorOracle::new(task);
    let j0 = enumerate_expectation(theta, |a| task.linear_reward(a))?;
    let grad = linear_exact_gradient(task, theta)?;
    let grad_sq = grad.norm_sq();

    let mut outcomes: Vec<(f64, EdgeVectors)> = Vec::new();
    for_each_architecture(theta, |a, p| {
        outcomes.push((p, oracle.estimate(kind, theta, a)?));
        Ok(())
    })?;
    let second: f64 = outcomes.iter().map(|(p, d)| p * d.norm_sq()).sum();
    let mut mean = grad.zeros_like();
    for (p, d) in &outcomes {
        mean.add_scaled(d, *p)?;
    }
    let variance = second - mean.norm_sq();

    let mut rows = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let mut lhs = 0.0;
        for (p, d) in &outcomes {
            let mut moved = theta.clone();
            moved.as_vectors_mut().add_scaled(d, eps)?;
            let j = enumerate_expectation(&moved, |a| task.linear_reward(a))?;
            lhs += p * libm::log(j);
        }
        lhs -= libm::log(j0);
        let rhs = eps / j0 * grad_sq - 0.5 * eps * eps * second;
        let rhs_loose = (eps / j0 - 0.5 * eps * eps) * grad_sq - 0.5 * eps * eps * second;
        rows.push(BoundRow { epsilon: eps, lhs, rhs, rhs_loose, passed: lhs >= rhs - BOUND_SLACK });
    }
    let passed = rows.iter().all(|r| r.passed);
    let monotone = rows.iter().all(|r| r.rhs <= 0.0 || r.lhs > 0.0);
    Ok(BoundReport { objective: j0, gradient_norm_sq: grad_sq, second_moment: second, variance, rows, passed, monotone })
}

/// Enumerated and closed-form variance gap at one edge.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceGap {
    /// `Var[delta_base,i] - Var[delta_adv,i]` by enumeration.
    pub enumerated: f64,
    /// `(1 - ||mu_i||^2) sum_{k != i} sum_j (r_k^j)^2 mu_k^j`.
    pub closed_form: f64,
    /// Whether every other edge has `E[r_k^T a_k] = 0` (within 1e-12), the
    /// condition under which the two agree.
    pub centered: bool,
}

pub fn variance_gap(task: &LinearRewardTask, theta: &DistributionParams, edge: usize) -> Result<VarianceGap> {
    if edge >= task.num_edges() {
        return Err(Error::UnknownEdge(edge));
    }
    let base = estimator_moments(task, theta, MomentEstimator::Reinforce)?;
    let adv = estimator_moments(task, theta, MomentEstimator::AdvantageExact)?;
    let mu_i = theta.probabilities(edge);
    let mut off = 0.0;
    let mut centered = true;
    for k in (0..task.num_edges()).filter(|&k| k != edge) {
        let mu = theta.probabilities(k);
        let r = task.rewards().edge(k);
        off += r.iter().zip(&mu).map(|(r, m)| r * r * m).sum::<f64>();
        centered &= r.iter().zip(&mu).map(|(r, m)| r * m).sum::<f64>().abs() <= 1e-12;
    }
    Ok(VarianceGap {
        enumerated: base.edges[edge].variance - adv.edges[edge].variance,
        closed_form: (1.0 - mu_i.iter().map(|m| m * m).sum::<f64>()) * off,
        centered,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub edges: usize,
    pub gap: VarianceGap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceGapReport {
    pub rows: Vec<GapRow>,
    /// Least-squares slope of the gap against `|I| - 1`, through the origin.
    pub slope: f64,
    pub max_residual: f64,
    pub max_closed_form_error: f64,
}

/// Replicates one edge's `(rewards, logits)` across each edge count and
/// measures the gap at edge 0.
pub fn variance_gap_report(rewards: &[f64], logits: &[f64], edge_counts: &[usize]) -> Result<VarianceGapReport> {
    if rewards.len() != logits.len() {
        return Err(Error::InvalidParams("rewards and logits differ in length".into()));
    }
    let mut rows = Vec::with_capacity(edge_counts.len());
    for &n in edge_counts {
        if n == 0 {
            return Err(Error::InvalidParams("edge count must be positive".into()));
        }
        let task = LinearRewardTask::from_rewards(vec![rewards.to_vec(); n])?;
        let theta = DistributionParams::from_logits(vec![logits.to_vec(); n])?;
        rows.push(GapRow { edges: n, gap: variance_gap(&task, &theta, 0)? });
    }
    let (num, den) = rows.iter().fold((0.0, 0.0), |(num, den), r| {
        let x = (r.edges - 1) as f64;
        (num + x * r.gap.enumerated, den + x * x)
    });
    let slope = if den > 0.0 { num / den } else { 0.0 };
    let max_residual =
        rows.iter().map(|r| (r.gap.enumerated - slope * (r.edges - 1) as f64).abs()).fold(0.0, f64::max);
    let max_closed_form_error = rows.iter().map(|r| (r.gap.enumerated - r.gap.closed_form).abs()).fold(0.0, f64::max);
    Ok(VarianceGapReport { rows, slope, max_residual, max_closed_form_error })
}

/// A random linear task and distribution: edge and option counts drawn from
/// the given ranges, rewards uniform on `[lo, hi)`, logits uniform on
/// `[-2, 2)`.
pub fn random_instance<R: Rng + ?Sized>(
    rng: &mut R,
    edges: RangeInclusive<usize>,
    ops: RangeInclusive<usize>,
    lo: f64,
    hi: f64,
) -> Result<(LinearRewardTask, DistributionParams)> {
    if edges.is_empty() || *ops.start() < 2 || ops.is_empty() {
        return Err(Error::InvalidParams("need at least one edge with two or more options".into()));
    }
    let sizes: Vec<usize> = (0..rng.random_range(edges)).map(|_| rng.random_range(ops.clone())).collect();
    let task = LinearRewardTask::random(rng, &sizes, lo, hi)?;
    let logits = sizes.iter().map(|&n| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    Ok((task, DistributionParams::from_logits(logits)?))
}

/// `task` with every edge's rewards shifted so that `E[r_k^T a_k] = 0`
/// under `theta`.
pub fn centered(task: &LinearRewardTask, theta: &DistributionParams) -> Result<LinearRewardTask> {
    let rows = (0..task.num_edges())
        .map(|k| {
            let mu = theta.probabilities(k);
            let r = task.rewards().edge(k);
            let m: f64 = r.iter().zip(&mu).map(|(r, m)| r * m).sum();
            r.iter().map(|v| v - m).collect()
        })
        .collect();
    LinearRewardTask::from_rewards(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use crate::tasks::{enumerate_expectation_vec, space_size};
    use proptest::prelude::*;

    fn instance(seed: u64, max_edges: usize, max_ops: usize, lo: f64, hi: f64) -> (LinearRewardTask, DistributionParams) {
        super::random_instance(&mut stream(seed, Stream::Task), 1..=max_edges, 2..=max_ops, lo, hi).unwrap()
    }

    #[test]
    fn worked_single_edge_moments() {
        let task = LinearRewardTask::from_rewards(vec![vec![1.0, 0.0]]).unwrap();
        let theta = DistributionParams::uniform(&[2]);
        let m = estimator_moments(&task, &theta, MomentEstimator::AdvantageExact).unwrap();
        let e = &m.edges[0];
        assert!((e.second_moment - 0.25).abs() < 1e-15);
        assert!((e.variance - 0.125).abs() < 1e-15);
        assert!((e.second_moment - e.variance - 0.125).abs() < 1e-15);
        // The printed advantage "variance" is the second moment.
        assert!((e.printed_adv_variance - e.second_moment).abs() < 1e-15);
        // The printed gradient norm disagrees with the enumerated one here.
        assert!((e.gradient_norm_sq - 0.125).abs() < 1e-15);
        assert!((e.printed_gradient_norm_sq - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn worked_two_edge_gap() {
        let task = LinearRewardTask::from_rewards(vec![vec![1.0, 0.0], vec![1.0, -1.0]]).unwrap();
        let theta = DistributionParams::uniform(&[2, 2]);
        let g = variance_gap(&task, &theta, 0).unwrap();
        assert!(g.centered);
        assert!((g.enumerated - 0.5).abs() < 1e-12);
        assert!((g.closed_form - 0.5).abs() < 1e-15);
        let adv = estimator_moments(&task, &theta, MomentEstimator::AdvantageExact).unwrap();
        assert!((adv.edges[0].variance - 0.125).abs() < 1e-15);
    }

    #[test]
    fn constant_reward_moments() {
        // A constant per-edge reward c makes A_i = c, so the estimate is
        // c (a_i - mu_i): mean zero, variance c^2 (1 - ||mu||^2).
        let theta = DistributionParams::from_logits(vec![vec![0.1, 0.5, -0.3]]).unwrap();
        let mu_sq: f64 = theta.probabilities(0).iter().map(|m| m * m).sum();
        for c in [0.0, 0.7] {
            let task = LinearRewardTask::from_rewards(vec![vec![c; 3]]).unwrap();
            let m = estimator_moments(&task, &theta, MomentEstimator::AdvantageExact).unwrap();
            assert!(m.edges[0].mean.iter().all(|v| v.abs() < 1e-15));
            assert!((m.edges[0].variance - c * c * (1.0 - mu_sq)).abs() < 1e-15);
        }
    }

    #[test]
    fn negative_control_fails() {
        let (task, theta) = instance(1, 3, 3, -1.0, 1.0);
        let r = unbiasedness_check(&task, &theta, MomentEstimator::CorruptedAdvantage).unwrap();
        assert!(!r.passed && r.discrepancy > 1e-3);
    }

    #[test]
    fn bound_at_zero_step_is_tight() {
        let (task, theta) = instance(2, 2, 2, 0.5, 2.0);
        let rep = improvement_bound_check(&task, &theta, MomentEstimator::AdvantageExact, &[0.0]).unwrap();
        assert!(rep.rows[0].lhs.abs() < 1e-15);
        assert_eq!(rep.rows[0].rhs, 0.0);
    }

    #[test]
    fn bound_rejects_non_positive_reward() {
        let task = LinearRewardTask::from_rewards(vec![vec![1.0, -2.0]]).unwrap();
        let theta = DistributionParams::uniform(&[2]);
        assert!(matches!(
            improvement_bound_check(&task, &theta, MomentEstimator::AdvantageExact, &[1e-2]),
            Err(Error::NonPositiveReward(_))
        ));
    }

    #[test]
    fn bound_holds_on_random_positive_instances() {
        for seed in 0..10 {
            let (task, theta) = instance(seed, 2, 2, 0.1, 2.0);
            let rep =
                improvement_bound_check(&task, &theta, MomentEstimator::AdvantageExact, &[1e-3, 1e-2, 1e-1]).unwrap();
            assert!(rep.passed && rep.monotone, "seed {seed}: {rep:?}");
            for row in &rep.rows {
                assert!(row.rhs >= row.rhs_loose);
            }
        }
    }

    #[test]
    fn gap_report_worked_family() {
        let rep = variance_gap_report(&[1.0, -1.0], &[0.0, 0.0], &[1, 2, 4, 8, 16]).unwrap();
        assert_eq!(rep.rows[0].gap.enumerated.abs(), 0.0);
        assert!((rep.rows[1].gap.enumerated - 0.5).abs() < 1e-12);
        assert!((rep.slope - 0.5).abs() < 1e-12);
        assert!(rep.max_residual <= 1e-9);
        assert!(rep.max_closed_form_error <= 1e-10);
    }

    #[test]
    fn variance_dominance_fails_off_centered_rewards() {
        // A constant negative off-edge reward lets the raw reward act as a
        // good baseline for edge 0, so REINFORCE beats the advantage there.
        let task = LinearRewardTask::from_rewards(vec![vec![10.0, 0.0], vec![-5.0, -5.0]]).unwrap();
        let theta = DistributionParams::uniform(&[2, 2]);
        let g = variance_gap(&task, &theta, 0).unwrap();
        assert!(!g.centered);
        assert!((g.enumerated - (-12.5)).abs() < 1e-12);
        assert!(g.closed_form > 0.0);
    }

    #[test]
    fn approx_matches_exact_on_linear_tasks() {
        for seed in 0..20 {
            let (task, theta) = instance(seed, 4, 4, -1.0, 1.0);
            let oracle = EstimatorOracle::new(&task);
            for_each_architecture(&theta, |a, _| {
                let e = oracle.advantages(MomentEstimator::AdvantageExact, a)?;
                let p = oracle.advantages(MomentEstimator::AdvantageApprox, a)?;
                for (x, y) in e.0.iter().zip(&p.0) {
                    assert!((x - y).abs() <= 1e-12);
                }
                Ok(())
            })
            .unwrap();
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn unbiased_estimators_pass(seed in 0u64..100_000) {
            let (task, theta) = instance(seed, 3, 3, -1.0, 1.0);
            for kind in [MomentEstimator::Reinforce, MomentEstimator::AdvantageExact, MomentEstimator::AdvantageApprox] {
                let r = unbiasedness_check(&task, &theta, kind).unwrap();
                prop_assert!(r.passed, "{:?} {}", kind, r.discrepancy);
            }
        }

        #[test]
        fn variance_is_non_negative(seed in 0u64..100_000) {
            let (task, theta) = instance(seed, 3, 4, -1.0, 1.0);
            for kind in [MomentEstimator::Reinforce, MomentEstimator::AdvantageExact] {
                let m = estimator_moments(&task, &theta, kind).unwrap();
                prop_assert!(m.edges.iter().all(|e| e.variance >= -1e-12));
            }
        }

        #[test]
        fn constant_advantage_shift_keeps_mean(seed in 0u64..100_000, c in -5.0f64..5.0) {
            let (task, theta) = instance(seed, 3, 3, -1.0, 1.0);
            let oracle = EstimatorOracle::new(&task);
            let shifted = |a: &Architecture| {
                let mut adv = oracle.advantages(MomentEstimator::AdvantageExact, a)?;
                adv.0.iter_mut().for_each(|v| *v += c);
                Ok(policy_gradient_from_advantages(&adv, &theta, a)?.0)
            };
            let plain = |a: &Architecture| oracle.estimate(MomentEstimator::AdvantageExact, &theta, a);
            let m1 = enumerate_expectation_vec(&theta, shifted).unwrap();
            let m0 = enumerate_expectation_vec(&theta, plain).unwrap();
            for (x, y) in m1.as_flat().iter().zip(m0.as_flat()) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn centered_gap_matches_closed_form(seed in 0u64..100_000) {
            let (task, theta) = instance(seed, 3, 3, -1.0, 1.0);
            let centered = centered(&task, &theta).unwrap();
            prop_assume!(space_size(&centered.sizes()) > 1);
            for i in 0..centered.num_edges() {
                let g = variance_gap(&centered, &theta, i).unwrap();
                prop_assert!(g.centered);
                prop_assert!(g.enumerated >= -1e-12);
                prop_assert!((g.enumerated - g.closed_form).abs() <= 1e-10);
            }
        }
    }
}
