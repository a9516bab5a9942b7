//! Benchmark tasks and the exhaustive-expectation oracle.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor};
use crate::distribution::DistributionParams;
use crate::rng::{stream, uniform, Stream};
use crate::supernet::{
    forward_sparse, minibatch_reward, Aggregation, Architecture, EdgeSpec, NodeSpec, OpKind, RewardKind, SupernetSpec,
    WeightStore,
};
use crate::{EdgeVectors, Error, Result};

/// Largest architecture space the enumeration oracle will visit.
pub const ENUMERATION_CAP: u128 = 1_000_000;

/// Reward `r^T a = sum_i r_i^T a_i` over per-edge reward vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct LinearRewardTask {
    rewards: EdgeVectors,
}

impl TryFrom<Vec<Vec<f64>>> for LinearRewardTask {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rewards(rows)
    }
}

impl From<LinearRewardTask> for Vec<Vec<f64>> {
    fn from(t: LinearRewardTask) -> Self {
        t.rewards.to_nested()
    }
}

/// A linear task realized as a supernet: one constant input, one
/// scale-candidate edge per task edge, summed at the output.
#[derive(Clone, Debug)]
pub struct LinearSupernet {
    pub spec: SupernetSpec,
    pub weights: WeightStore,
    pub batch: Tensor,
}

impl LinearRewardTask {
    /// Every edge needs at least two options and every entry must be finite.
    pub fn from_rewards(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidParams("linear task needs at least one edge".into()));
        }
        if let Some(i) = rows.iter().position(|r| r.len() < 2) {
            return Err(Error::InvalidParams(format!("edge {i} needs at least two options")));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("reward entries must be finite".into()));
        }
        Ok(Self { rewards: EdgeVectors::from_nested(rows) })
    }

    /// Rewards drawn uniformly from `[lo, hi)`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, sizes: &[usize], lo: f64, hi: f64) -> Result<Self> {
        Self::from_rewards(sizes.iter().map(|&n| (0..n).map(|_| uniform(rng, lo, hi)).collect()).collect())
    }

    pub fn rewards(&self) -> &EdgeVectors {
        &self.rewards
    }

    pub fn num_edges(&self) -> usize {
        self.rewards.num_edges()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.rewards.sizes()
    }

    pub fn linear_reward(&self, arch: &Architecture) -> f64 {
        self.rewards.edges().zip(arch.choices()).map(|(r, &j)| r[j]).sum()
    }

    /// `max_a r^T a`, attained edge by edge.
    pub fn best_reward(&self) -> f64 {
        self.rewards.edges().map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max)).sum()
    }

    /// A maximizing architecture; lowest index on ties.
    pub fn best_architecture(&self) -> Architecture {
        Architecture::new(self.rewards.edges().map(crate::distribution::argmax).collect())
    }

    /// `J(theta) = sum_i r_i^T mu_i(theta_i)`.
    pub fn expected_reward(&self, theta: &DistributionParams) -> f64 {
        (0..self.num_edges())
            .map(|i| self.rewards.edge(i).iter().zip(theta.probabilities(i)).map(|(r, m)| r * m).sum::<f64>())
            .sum()
    }

    pub fn to_supernet(&self) -> LinearSupernet {
        let nodes = vec![
            NodeSpec { name: "input".into(), aggregation: Aggregation::Sum },
            NodeSpec { name: "output".into(), aggregation: Aggregation::Sum },
        ];
        let edges = self
            .rewards
            .edges()
            .map(|r| EdgeSpec { source: 0, target: 1, candidates: vec![OpKind::Scale; r.len()] })
            .collect();
        let spec = SupernetSpec::new(vec![1], nodes, edges, 0, 1).expect("linear supernet is well formed");
        let mut weights = WeightStore::zeros(&spec);
        for (e, r) in self.rewards.edges().enumerate() {
            for (j, &v) in r.iter().enumerate() {
                weights.set(e, j, Tensor::scalar(v)).expect("scale weights are scalars");
            }
        }
        let batch = Tensor::full(&[1, 1], 1.0).expect("positive shape");
        LinearSupernet { spec, weights, batch }
    }
}

/// Size of the architecture space with the given per-edge option counts.
pub fn space_size(sizes: &[usize]) -> u128 {
    sizes.iter().fold(1u128, |acc, &n| acc.saturating_mul(n as u128))
}

/// Calls `visit(arch, p_theta(arch))` for every architecture, in
/// lexicographic order of choice indices.
pub fn for_each_architecture<F>(theta: &DistributionParams, mut visit: F) -> Result<()>
where
    F: FnMut(&Architecture, f64) -> Result<()>,
{
    let sizes = theta.sizes();
    let size = space_size(&sizes);
    if size > ENUMERATION_CAP {
        return Err(Error::StateSpaceTooLarge { size, cap: ENUMERATION_CAP });
    }
    let probs: Vec<Vec<f64>> = (0..sizes.len()).map(|i| theta.probabilities(i)).collect();
    let mut idx = vec![0usize; sizes.len()];
    loop {
        let p: f64 = idx.iter().zip(&probs).map(|(&j, m)| m[j]).product();
        visit(&Architecture::new(idx.clone()), p)?;
        let mut k = sizes.len();
        loop {
            if k == 0 {
                return Ok(());
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < sizes[k] {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// `sum_a p_theta(a) f(a)`.
pub fn enumerate_expectation<F: FnMut(&Architecture) -> f64>(theta: &DistributionParams, mut f: F) -> Result<f64> {
    let mut acc = 0.0;
    for_each_architecture(theta, |a, p| {
        acc += p * f(a);
        Ok(())
    })?;
    Ok(acc)
}

/// Vector-valued expectation; every `f(a)` must share one layout.
pub fn enumerate_expectation_vec<F>(theta: &DistributionParams, mut f: F) -> Result<EdgeVectors>
where
    F: FnMut(&Architecture) -> Result<EdgeVectors>,
{
    let mut acc: Option<EdgeVectors> = None;
    for_each_architecture(theta, |a, p| {
        let v = f(a)?;
        match &mut acc {
            None => {
                let mut first = v.zeros_like();
                first.add_scaled(&v, p)?;
                acc = Some(first);
            }
            Some(sum) => sum.add_scaled(&v, p)?,
        }
        Ok(())
    })?;
    Ok(acc.expect("the space has at least one architecture"))
}

/// `dJ/dtheta_i = mu_i (r_i - r_i^T mu_i)` for `J = sum_i r_i^T mu_i`.
pub fn linear_exact_gradient(task: &LinearRewardTask, theta: &DistributionParams) -> Result<EdgeVectors> {
    if task.sizes() != theta.sizes() {
        return Err(Error::InvalidParams("task and distribution layouts differ".into()));
    }
    let mut g = EdgeVectors::zeros(&theta.sizes());
    for i in 0..task.num_edges() {
        let mu = theta.probabilities(i);
        let r = task.rewards().edge(i);
        let mean: f64 = r.iter().zip(&mu).map(|(r, m)| r * m).sum();
        for ((o, m), r) in g.edge_mut(i).iter_mut().zip(&mu).zip(r) {
            *o = m * (r - mean);
        }
    }
    Ok(g)
}

/// Parameters of the teacher/student regression task.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyTaskConfig {
    pub edges: usize,
    pub ops: usize,
    pub input_size: usize,
    pub kernel: usize,
    pub stride: usize,
    /// Weights are drawn from `[-weight_range, weight_range)`.
    pub weight_range: f64,
    pub batch_size: usize,
    /// Minimum max-abs difference between the output contributions of two
    /// candidates on the same edge.
    pub distinct_tolerance: f64,
    pub probe_size: usize,
}

impl Default for ToyTaskConfig {
    fn default() -> Self {
        Self {
            edges: 10,
            ops: 10,
            input_size: 13,
            kernel: 7,
            stride: 2,
            weight_range: 0.5,
            batch_size: 100,
            distinct_tolerance: 1e-3,
            probe_size: 100,
        }
    }
}

impl ToyTaskConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.edges >= 1
            && self.ops >= 2
            && self.stride >= 1
            && self.kernel >= 1
            && self.input_size >= self.kernel
            && self.weight_range > 0.0
            && self.batch_size >= 1
            && self.probe_size >= 1
            && self.distinct_tolerance >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid toy task parameters {self:?}")))
        }
    }

    fn hidden_size(&self) -> usize {
        (self.input_size - self.kernel) / self.stride + 1
    }

    pub fn supernet(&self) -> Result<SupernetSpec> {
        self.validate()?;
        let mut nodes = vec![NodeSpec { name: "input".into(), aggregation: Aggregation::Sum }];
        for i in 0..self.edges {
            nodes.push(NodeSpec { name: format!("hidden{i}"), aggregation: Aggregation::Sum });
        }
        nodes.push(NodeSpec { name: "output".into(), aggregation: Aggregation::Average });
        let output = self.edges + 1;
        let search = OpKind::Conv {
            kernel: [self.kernel, self.kernel],
            in_channels: 1,
            out_channels: 1,
            stride: self.stride,
            tanh: true,
        };
        let h = self.hidden_size();
        let fixed = OpKind::Conv { kernel: [h, h], in_channels: 1, out_channels: 1, stride: 1, tanh: false };
        let mut edges: Vec<EdgeSpec> = (0..self.edges)
            .map(|i| EdgeSpec { source: 0, target: i + 1, candidates: vec![search.clone(); self.ops] })
            .collect();
        edges.extend((0..self.edges).map(|i| EdgeSpec { source: i + 1, target: output, candidates: vec![fixed.clone()] }));
        SupernetSpec::new(vec![self.input_size, self.input_size, 1], nodes, edges, 0, output)
    }
}

/// Teacher/student regression task with frozen shared weights.
#[derive(Clone, Debug)]
pub struct ToyTask {
    pub config: ToyTaskConfig,
    pub spec: SupernetSpec,
    pub teacher: Architecture,
    pub weights: WeightStore,
    /// Weight sets rejected by the distinctness check before this one.
    pub regenerations: usize,
}

impl ToyTask {
    /// Minibatch reward (negative mse against the targets) of `arch`.
    pub fn reward(&self, arch: &Architecture, inputs: &Tensor, targets: &Tensor) -> Result<f64> {
        let (out, _) = forward_sparse(&self.spec, &self.weights, arch, inputs)?;
        minibatch_reward(&out, Some(targets), RewardKind::Mse)
    }

    /// Mean squared error of `arch` against the targets.
    pub fn test_loss(&self, arch: &Architecture, inputs: &Tensor, targets: &Tensor) -> Result<f64> {
        Ok(-self.reward(arch, inputs, targets)?)
    }
}

/// The paper-sized toy task for `seed`.
pub fn make_toy_task(seed: u64) -> ToyTask {
    make_toy_task_with(ToyTaskConfig::default(), seed).expect("default toy configuration is valid")
}

pub fn make_toy_task_with(config: ToyTaskConfig, seed: u64) -> Result<ToyTask> {
    let spec = config.supernet()?;
    let mut rng = stream(seed, Stream::Task);
    let teacher = Architecture::new((0..config.edges).map(|_| rng.random_range(0..config.ops)).collect());
    let probe = uniform_inputs(&config, &mut rng, config.probe_size)?;
    let mut regenerations = 0;
    loop {
        let weights = WeightStore::uniform(&spec, &mut rng, -config.weight_range, config.weight_range);
        if candidates_distinct(&config, &spec, &weights, &probe)? {
            return Ok(ToyTask { config, spec, teacher, weights, regenerations });
        }
        regenerations += 1;
    }
}

fn uniform_inputs<R: Rng + ?Sized>(config: &ToyTaskConfig, rng: &mut R, n: usize) -> Result<Tensor> {
    let s = config.input_size;
    let data = (0..n * s * s).map(|_| uniform(rng, -1.0, 1.0)).collect();
    Tensor::new(vec![n, s, s, 1], data)
}

/// Output of candidate `j` on searchable slot `slot` after the fixed edge
/// and the output average.
fn candidate_contribution(config: &ToyTaskConfig, spec: &SupernetSpec, weights: &WeightStore, slot: usize, j: usize, inputs: &Tensor) -> Result<Tensor> {
    let e = spec.searchable_edges()[slot];
    let mut tape = Tape::new();
    let x = tape.constant(inputs.clone());
    let k = tape.constant(weights.get(e, j).expect("complete store").clone());
    let h = tape.conv2d(x, k, config.stride)?;
    let h = tape.tanh(h);
    let k2 = tape.constant(weights.get(config.edges + slot, 0).expect("complete store").clone());
    let y = tape.conv2d(h, k2, 1)?;
    let y = tape.scale(y, 1.0 / config.edges as f64);
    Ok(tape.value(y).clone())
}

/// Each candidate's contribution to the network output, compared pairwise
/// per edge on the probe batch.
fn candidates_distinct(config: &ToyTaskConfig, spec: &SupernetSpec, weights: &WeightStore, probe: &Tensor) -> Result<bool> {
    for slot in 0..config.edges {
        let contributions = (0..config.ops)
            .map(|j| candidate_contribution(config, spec, weights, slot, j, probe))
            .collect::<Result<Vec<_>>>()?;
        for a in 0..config.ops {
            for b in a + 1..config.ops {
                if contributions[a].max_abs_diff(&contributions[b])? < config.distinct_tolerance {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// Every candidate's output contribution on a fixed input set.
///
/// The toy network output is the sum of one contribution per edge, so with
/// frozen weights any architecture can be scored on these inputs by adding
/// table rows. Sums differ from a full forward pass only by rounding.
#[derive(Clone, Debug)]
pub struct ContributionTable {
    rows: Vec<Vec<Vec<f64>>>,
    len: usize,
}

impl ContributionTable {
    pub fn new(task: &ToyTask, inputs: &Tensor) -> Result<Self> {
        let mut rows = Vec::with_capacity(task.config.edges);
        for slot in 0..task.config.edges {
            let per_op = (0..task.config.ops)
                .map(|j| Ok(candidate_contribution(&task.config, &task.spec, &task.weights, slot, j, inputs)?.data().to_vec()))
                .collect::<Result<Vec<_>>>()?;
            rows.push(per_op);
        }
        let len = rows.first().and_then(|r| r.first()).map_or(0, Vec::len);
        Ok(Self { rows, len })
    }

    /// Number of output values per architecture.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn predict(&self, arch: &Architecture) -> Vec<f64> {
        let mut out = vec![0.0; self.len];
        for (slot, per_op) in self.rows.iter().enumerate() {
            for (o, v) in out.iter_mut().zip(&per_op[arch.choice(slot)]) {
                *o += v;
            }
        }
        out
    }

    /// Mean squared error of `arch` against `targets`.
    pub fn mse(&self, arch: &Architecture, targets: &[f64]) -> f64 {
        let pred = self.predict(arch);
        pred.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / self.len.max(1) as f64
    }
}

/// `n` inputs uniform on `[-1, 1]` and the teacher's outputs for them.
pub fn sample_toy_batch<R: Rng + ?Sized>(task: &ToyTask, rng: &mut R, n: usize) -> Result<(Tensor, Tensor)> {
    if n == 0 {
        return Err(Error::InvalidConfig("batch size must be at least 1".into()));
    }
    let inputs = uniform_inputs(&task.config, rng, n)?;
    let (targets, _) = forward_sparse(&task.spec, &task.weights, &task.teacher, &inputs)?;
    Ok((inputs, targets))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{reinforce_estimate, BaselineState};
    use proptest::prelude::*;
    use rand::Rng;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn linear_reward_examples() {
        let t = LinearRewardTask::from_rewards(vec![vec![0.3, 0.5], vec![0.7, -0.1]]).unwrap();
        assert!((t.linear_reward(&Architecture::new(vec![0, 1])) - 0.2).abs() < 1e-15);
        let z = LinearRewardTask::from_rewards(vec![vec![0.0; 3]; 2]).unwrap();
        for_each_architecture(&DistributionParams::uniform(&[3, 3]), |a, _| {
            assert_eq!(z.linear_reward(a), 0.0);
            Ok(())
        })
        .unwrap();
        assert!((t.best_reward() - 1.2).abs() < 1e-15);
        assert_eq!(t.best_architecture(), Architecture::new(vec![1, 0]));
    }

    #[test]
    fn linear_task_rejects_bad_rows() {
        assert!(LinearRewardTask::from_rewards(vec![]).is_err());
        assert!(LinearRewardTask::from_rewards(vec![vec![1.0]]).is_err());
        assert!(LinearRewardTask::from_rewards(vec![vec![1.0, f64::NAN]]).is_err());
    }

    #[test]
    fn expectation_examples() {
        let theta = DistributionParams::from_logits(vec![vec![0.3, -0.2], vec![1.0, 0.0, 2.0]]).unwrap();
        assert!((enumerate_expectation(&theta, |_| 1.0).unwrap() - 1.0).abs() < 1e-15);

        let t = LinearRewardTask::from_rewards(vec![vec![1.0, 3.0], vec![0.0, 0.5, 1.0]]).unwrap();
        let uni = DistributionParams::uniform(&[2, 3]);
        let e = enumerate_expectation(&uni, |a| t.linear_reward(a)).unwrap();
        assert!((e - (2.0 + 0.5)).abs() < 1e-15);

        let mean = enumerate_expectation_vec(&theta, |a| {
            Ok(EdgeVectors::from_nested((0..a.len()).map(|i| a.one_hot(i, theta.sizes()[i])).collect()))
        })
        .unwrap();
        assert!(close(mean.as_flat(), theta.mixture().as_flat(), 1e-15));
    }

    #[test]
    fn enumeration_cap() {
        let theta = DistributionParams::uniform(&[10; 7]);
        assert!(matches!(
            enumerate_expectation(&theta, |_| 0.0),
            Err(Error::StateSpaceTooLarge { size: 10_000_000, cap: ENUMERATION_CAP })
        ));
    }

    #[test]
    fn exact_gradient_examples() {
        let t = LinearRewardTask::from_rewards(vec![vec![1.0, 0.0]]).unwrap();
        let g = linear_exact_gradient(&t, &DistributionParams::constant(&[2], 0.0)).unwrap();
        assert!(close(g.as_flat(), &[0.25, -0.25], 1e-15));

        // Central finite differences on J.
        let theta = DistributionParams::from_logits(vec![vec![0.2, -0.4, 0.9]]).unwrap();
        let t = LinearRewardTask::from_rewards(vec![vec![0.5, -1.0, 2.0]]).unwrap();
        let g = linear_exact_gradient(&t, &theta).unwrap();
        for k in 0..3 {
            let mut p = theta.clone();
            p.logits_mut(0)[k] += 1e-6;
            let mut m = theta.clone();
            m.logits_mut(0)[k] -= 1e-6;
            let fd = (t.expected_reward(&p) - t.expected_reward(&m)) / 2e-6;
            assert!((fd - g.edge(0)[k]).abs() < 1e-9);
        }

        let c = LinearRewardTask::from_rewards(vec![vec![2.5; 4]]).unwrap();
        let g = linear_exact_gradient(&c, &theta_for(&[4])).unwrap();
        assert!(g.as_flat().iter().all(|v| v.abs() < 1e-15));
    }

    fn theta_for(sizes: &[usize]) -> DistributionParams {
        let logits = sizes.iter().map(|&n| (0..n).map(|j| 0.3 * j as f64 - 0.1).collect()).collect();
        DistributionParams::from_logits(logits).unwrap()
    }

    #[test]
    fn reinforce_enumeration_matches_gradient() {
        let theta = DistributionParams::from_logits(vec![vec![0.1, 0.7], vec![-0.5, 0.2, 0.0]]).unwrap();
        let t = LinearRewardTask::from_rewards(vec![vec![0.4, -0.3], vec![1.2, 0.1, -0.8]]).unwrap();
        let mean = enumerate_expectation_vec(&theta, |a| {
            let mut b = BaselineState::new(0.0);
            Ok(reinforce_estimate(t.linear_reward(a), &mut b, &theta, a)?.0)
        })
        .unwrap();
        let exact = linear_exact_gradient(&t, &theta).unwrap();
        assert!(close(mean.as_flat(), exact.as_flat(), 1e-12));
    }

    #[test]
    fn linear_supernet_reproduces_reward() {
        let t = LinearRewardTask::from_rewards(vec![vec![0.3, -0.7], vec![1.5, 0.25, -2.0]]).unwrap();
        let net = t.to_supernet();
        assert_eq!(net.spec.searchable_edges(), &[0, 1]);
        for_each_architecture(&DistributionParams::uniform(&[2, 3]), |a, _| {
            let (out, _) = forward_sparse(&net.spec, &net.weights, a, &net.batch)?;
            let r = minibatch_reward(&out, None, RewardKind::Linear)?;
            assert_eq!(r, t.linear_reward(a));
            Ok(())
        })
        .unwrap();
    }

    fn small_toy() -> ToyTaskConfig {
        ToyTaskConfig { edges: 3, ops: 4, batch_size: 20, probe_size: 20, ..ToyTaskConfig::default() }
    }

    #[test]
    fn toy_teacher_has_zero_loss() {
        let task = make_toy_task(3);
        assert_eq!(task.spec.searchable_edges().len(), 10);
        assert_eq!(task.spec.choice_sizes(), vec![10; 10]);
        assert_eq!(task.spec.output_shape(), &[1, 1, 1]);
        let mut rng = stream(3, Stream::ValData);
        let (x, y) = sample_toy_batch(&task, &mut rng, 100).unwrap();
        assert_eq!(task.reward(&task.teacher, &x, &y).unwrap(), 0.0);
        assert!(x.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        assert!(y.is_finite());
    }

    #[test]
    fn toy_task_is_deterministic() {
        let a = make_toy_task_with(small_toy(), 11).unwrap();
        let b = make_toy_task_with(small_toy(), 11).unwrap();
        assert_eq!(a.teacher, b.teacher);
        assert_eq!(a.weights, b.weights);
        let c = make_toy_task_with(small_toy(), 12).unwrap();
        assert_ne!(a.weights, c.weights);
        let draw = |seed| sample_toy_batch(&a, &mut stream(seed, Stream::TrainData), 5).unwrap();
        assert_eq!(draw(1), draw(1));
    }

    #[test]
    fn toy_targets_are_bounded() {
        // |tanh| <= 1, so each fixed conv output is bounded by its weights' l1 norm.
        let task = make_toy_task_with(small_toy(), 5).unwrap();
        let bound: f64 = (0..3)
            .map(|s| task.weights.get(3 + s, 0).unwrap().data().iter().map(|w| w.abs()).sum::<f64>())
            .sum::<f64>()
            / 3.0;
        let (_, y) = sample_toy_batch(&task, &mut stream(0, Stream::TestData), 50).unwrap();
        assert!(y.data().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn toy_deviation_increases_loss() {
        let mut failures = 0;
        for seed in 0..100 {
            let task = make_toy_task(seed);
            let mut rng = stream(seed, Stream::TestData);
            let (x, y) = sample_toy_batch(&task, &mut rng, 100).unwrap();
            let slot = (seed as usize) % 10;
            let other = (task.teacher.choice(slot) + 1 + (seed as usize) % 9) % 10;
            let student = task.teacher.with_choice(slot, other);
            if task.test_loss(&student, &x, &y).unwrap() <= 0.0 {
                failures += 1;
            }
        }
        assert!(failures <= 1, "{failures} of 100 deviating students had zero loss");
    }

    #[test]
    fn contribution_table_matches_forward() {
        let task = make_toy_task_with(small_toy(), 5).unwrap();
        let mut rng = stream(5, Stream::TestData);
        let (x, y) = sample_toy_batch(&task, &mut rng, 20).unwrap();
        let table = ContributionTable::new(&task, &x).unwrap();
        assert_eq!(table.len(), 20);
        let teacher_pred = table.predict(&task.teacher);
        assert!(close(&teacher_pred, y.data(), 1e-14));
        assert_eq!(table.mse(&task.teacher, &teacher_pred), 0.0);
        for _ in 0..10 {
            let arch = Architecture::new((0..task.config.edges).map(|_| rng.random_range(0..task.config.ops)).collect());
            let (out, _) = forward_sparse(&task.spec, &task.weights, &arch, &x).unwrap();
            assert!(close(&table.predict(&arch), out.data(), 1e-14));
            let direct = task.test_loss(&arch, &x, &y).unwrap();
            assert!((table.mse(&arch, y.data()) - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn toy_batch_rejects_empty() {
        let task = make_toy_task_with(small_toy(), 0).unwrap();
        assert!(sample_toy_batch(&task, &mut stream(0, Stream::TrainData), 0).is_err());
    }

    proptest! {
        #[test]
        fn linear_expectation_matches_closed_form(seed in 0u64..10_000) {
            let mut rng = stream(seed, Stream::Task);
            let sizes: Vec<usize> = (0..rng.random_range(1..=4)).map(|_| rng.random_range(2..=5)).collect();
            let t = LinearRewardTask::random(&mut rng, &sizes, -1.0, 1.0).unwrap();
            let logits = sizes.iter().map(|&n| (0..n).map(|_| uniform(&mut rng, -3.0, 3.0)).collect()).collect();
            let theta = DistributionParams::from_logits(logits).unwrap();
            let e = enumerate_expectation(&theta, |a| t.linear_reward(a)).unwrap();
            prop_assert!((e - t.expected_reward(&theta)).abs() <= 1e-12);
            prop_assert!(e <= t.best_reward() + 1e-12);
            let score = enumerate_expectation_vec(&theta, |a| theta.log_prob_grad(a)).unwrap();
            prop_assert!(score.as_flat().iter().all(|v| v.abs() <= 1e-12));
        }

        #[test]
        fn degenerate_theta_attains_best(seed in 0u64..10_000) {
            let mut rng = stream(seed, Stream::Task);
            let t = LinearRewardTask::random(&mut rng, &[3, 2, 4], -1.0, 1.0).unwrap();
            let best = t.best_architecture();
            let logits = (0..3).map(|i| {
                let mut v = vec![0.0; t.sizes()[i]];
                v[best.choice(i)] = 60.0;
                v
            }).collect();
            let theta = DistributionParams::from_logits(logits).unwrap();
            prop_assert!((t.expected_reward(&theta) - t.best_reward()).abs() <= 1e-12);
        }
    }
}
