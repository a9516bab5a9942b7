//! The alternating weight / architecture search loop.
//!
//! Each iteration optionally takes a weight step on a training minibatch
//! with a freshly sampled architecture, then takes a step on theta from a
//! validation minibatch with another fresh sample, and logs a [`RunRecord`]
//! describing the distribution *before* that theta step.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::distribution::DistributionParams;
use crate::estimators::{
    approx_advantages, dense_softmax_gradient, exact_advantages, gumbel_st_estimate, policy_gradient_from_advantages,
    reinforce_estimate, zero_op_adjust, BaselineState, EmaTable, EstimatorKind, GradientEstimate, DEFAULT_DECAY,
};
use crate::optim::{linear_schedule, OptimizerConfig, OptimizerState};
use crate::rng::{stream, RunRng, Stream};
use crate::supernet::{
    forward_sparse, minibatch_reward, sparse_reward_pass, Architecture, PassCost, PassOptions, RewardKind,
    SupernetSpec, WeightStore,
};
use crate::tasks::{make_toy_task_with, sample_toy_batch, ContributionTable, LinearRewardTask, LinearSupernet, ToyTask, ToyTaskConfig};
use crate::{Error, Result};

fn default_low() -> f64 {
    -1.0
}
fn default_high() -> f64 {
    1.0
}
fn default_sizes() -> Vec<usize> {
    alloc::vec![5; 4]
}

/// A linear-reward task, either given explicitly or drawn from the run's
/// task stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearTaskConfig {
    #[serde(default)]
    pub rewards: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_sizes")]
    pub sizes: Vec<usize>,
    #[serde(default = "default_low")]
    pub low: f64,
    #[serde(default = "default_high")]
    pub high: f64,
}

impl Default for LinearTaskConfig {
    fn default() -> Self {
        Self { rewards: None, sizes: default_sizes(), low: default_low(), high: default_high() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskConfig {
    Linear(LinearTaskConfig),
    Toy(ToyTaskConfig),
}

fn default_decay() -> f64 {
    DEFAULT_DECAY
}
fn default_true() -> bool {
    true
}
fn default_tau_start() -> f64 {
    10.0
}
fn default_tau_end() -> f64 {
    0.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyConfig {
    pub kind: EstimatorKind,
    /// Replace the advantage of sampled zero operations by the edge's worst
    /// EMA advantage. No effect without zero candidates.
    #[serde(default = "default_true")]
    pub zero_op_adjust: bool,
    #[serde(default = "default_decay")]
    pub ema_decay: f64,
    #[serde(default = "default_decay")]
    pub baseline_decay: f64,
    /// Gumbel temperature, annealed linearly over the run.
    #[serde(default = "default_tau_start")]
    pub temperature_start: f64,
    #[serde(default = "default_tau_end")]
    pub temperature_end: f64,
}

impl StrategyConfig {
    pub fn new(kind: EstimatorKind) -> Self {
        Self {
            kind,
            zero_op_adjust: true,
            ema_decay: DEFAULT_DECAY,
            baseline_decay: DEFAULT_DECAY,
            temperature_start: default_tau_start(),
            temperature_end: default_tau_end(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    Argmax,
    ProcessBest,
}

fn default_cadence() -> u64 {
    1
}
fn default_theta_init() -> f64 {
    1.0
}
fn default_test_batch() -> usize {
    1000
}
fn default_seeds() -> Vec<u64> {
    alloc::vec![0]
}
fn default_selection() -> SelectionMode {
    SelectionMode::Argmax
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub iterations: u64,
    /// Weight-only steps before the search starts; needs trainable weights.
    #[serde(default)]
    pub pretrain_iterations: u64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Test loss is evaluated every `cadence` iterations.
    #[serde(default = "default_cadence")]
    pub cadence: u64,
    #[serde(default = "default_selection")]
    pub selection_mode: SelectionMode,
    #[serde(default)]
    pub train_weights: bool,
    #[serde(default = "default_theta_init")]
    pub theta_init: f64,
    #[serde(default = "default_test_batch")]
    pub test_batch_size: usize,
}

impl RunConfig {
    pub fn new(iterations: u64) -> Self {
        Self {
            iterations,
            pretrain_iterations: 0,
            seeds: default_seeds(),
            cadence: 1,
            selection_mode: SelectionMode::Argmax,
            train_weights: false,
            theta_init: 1.0,
            test_batch_size: default_test_batch(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub task: TaskConfig,
    pub strategy: StrategyConfig,
    pub optimizer_w: OptimizerConfig,
    pub optimizer_theta: OptimizerConfig,
    pub run: RunConfig,
}

impl SearchConfig {
    /// The toy regression setting: frozen weights, Adam(1e-3) on theta.
    pub fn toy(kind: EstimatorKind, iterations: u64) -> Self {
        Self {
            task: TaskConfig::Toy(ToyTaskConfig::default()),
            strategy: StrategyConfig::new(kind),
            optimizer_w: OptimizerConfig::sgd(0.025, 0.9),
            optimizer_theta: OptimizerConfig::adam(1e-3),
            run: RunConfig::new(iterations),
        }
    }

    pub fn linear(kind: EstimatorKind, iterations: u64) -> Self {
        Self { task: TaskConfig::Linear(LinearTaskConfig::default()), ..Self::toy(kind, iterations) }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        self.optimizer_w.validate()?;
        self.optimizer_theta.validate()?;
        let run = &self.run;
        if run.cadence == 0 || (run.cadence != 1 && !run.iterations.is_multiple_of(run.cadence)) {
            return bad("run.cadence must be 1 or divide run.iterations");
        }
        if run.seeds.is_empty() {
            return bad("run.seeds must not be empty");
        }
        if run.pretrain_iterations > 0 && !run.train_weights {
            return bad("run.pretrain_iterations needs run.train_weights = true");
        }
        if run.test_batch_size == 0 {
            return bad("run.test_batch_size must be positive");
        }
        if !run.theta_init.is_finite() {
            return bad("run.theta_init must be finite");
        }
        let s = &self.strategy;
        if !(s.ema_decay > 0.0 && s.ema_decay <= 1.0) || !(s.baseline_decay > 0.0 && s.baseline_decay <= 1.0) {
            return bad("strategy decays must lie in (0, 1]");
        }
        if !(s.temperature_start > 0.0 && s.temperature_end > 0.0) {
            return bad("gumbel temperatures must be positive");
        }
        match &self.task {
            TaskConfig::Linear(t) => {
                if run.train_weights {
                    return bad("the linear task has no trainable weights");
                }
                if t.rewards.is_none() && (t.sizes.is_empty() || t.sizes.iter().any(|&n| n < 2)) {
                    return bad("task.sizes needs at least one edge with two or more options each");
                }
                if !(t.low < t.high) {
                    return bad("task.low must be below task.high");
                }
            }
            TaskConfig::Toy(t) => t.validate()?,
        }
        Ok(())
    }
}

/// One logged iteration. Fields describe theta before the update of
/// iteration `iteration`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub iteration: u64,
    /// Architecture the theta step evaluated (the argmax for the dense
    /// strategy, whose reward is then the relaxed reward).
    pub sampled_arch: Architecture,
    pub reward: f64,
    pub entropy_mean: f64,
    pub argmax_arch: Architecture,
    pub process_best_reward: f64,
    pub process_best_arch: Architecture,
    pub lr_w: Option<f64>,
    pub lr_theta: f64,
    pub temperature: Option<f64>,
    /// Held-out loss of `argmax_arch`, on cadence iterations.
    pub test_loss: Option<f64>,
    /// Seconds since the run started, from the caller's clock. Not part of
    /// the deterministic payload.
    pub elapsed_seconds: Option<f64>,
}

/// Receives records as the run produces them.
pub trait RecordSink {
    fn record(&mut self, record: &RunRecord);
}

impl RecordSink for Vec<RunRecord> {
    fn record(&mut self, record: &RunRecord) {
        self.push(record.clone());
    }
}

impl<F: FnMut(&RunRecord)> RecordSink for F {
    fn record(&mut self, record: &RunRecord) {
        self(record)
    }
}

/// Discards records.
pub struct NullSink;

impl RecordSink for NullSink {
    fn record(&mut self, _: &RunRecord) {}
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostSummary {
    pub theta_forwards: usize,
    pub theta_backwards: usize,
    pub theta_searchable_evals: usize,
    pub theta_fixed_evals: usize,
    pub weight_forwards: usize,
    pub weight_backwards: usize,
    /// Held-out forward passes. Frozen-weight runs score from a table instead.
    pub test_forwards: usize,
}

impl CostSummary {
    fn add_theta(&mut self, c: PassCost) {
        self.theta_forwards += c.forwards;
        self.theta_backwards += c.backwards;
        self.theta_searchable_evals += c.evals.searchable;
        self.theta_fixed_evals += c.evals.fixed;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessBest {
    pub reward: f64,
    pub arch: Architecture,
    pub iteration: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub strategy: EstimatorKind,
    pub iterations: u64,
    pub final_arch: Architecture,
    pub argmax_arch: Architecture,
    pub process_best: Option<ProcessBest>,
    pub final_entropy: f64,
    /// Held-out loss of the final architecture.
    pub final_test_loss: f64,
    /// Toy task only.
    pub teacher: Option<Architecture>,
    pub iterations_to_recovery: Option<u64>,
    pub cost: CostSummary,
}

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub final_arch: Architecture,
    pub theta: DistributionParams,
    pub weights: WeightStore,
    pub summary: RunSummary,
}

/// Deterministic final selection.
pub fn select_final(mode: SelectionMode, theta: &DistributionParams, best: Option<&ProcessBest>) -> Result<Architecture> {
    match mode {
        SelectionMode::Argmax => Ok(theta.argmax_architecture()),
        SelectionMode::ProcessBest => best.map(|b| b.arch.clone()).ok_or(Error::EmptyHistory),
    }
}

/// Start of the final streak of evaluations whose argmax equals the
/// teacher; `None` if the last evaluation does not match.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RecoveryTracker {
    since: Option<u64>,
}

impl RecoveryTracker {
    pub fn observe(&mut self, iteration: u64, argmax: &Architecture, teacher: &Architecture) {
        if argmax == teacher {
            self.since.get_or_insert(iteration);
        } else {
            self.since = None;
        }
    }

    pub fn value(&self) -> Option<u64> {
        self.since
    }
}

pub fn recovery_metric<'a, I>(evaluations: I, teacher: &Architecture) -> Option<u64>
where
    I: IntoIterator<Item = (u64, &'a Architecture)>,
{
    let mut t = RecoveryTracker::default();
    for (i, a) in evaluations {
        t.observe(i, a, teacher);
    }
    t.value()
}

/// Nearest-rank percentile, `p` in `[0, 100]`: the smallest sample value
/// with at least `p` percent of the sample at or below it. The median of an
/// even-sized sample is therefore its lower middle value.
pub fn nearest_rank(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() || !(0.0..=100.0).contains(&p) {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = libm::ceil(p / 100.0 * v.len() as f64) as usize;
    Some(v[rank.max(1) - 1])
}

enum Problem {
    Linear { task: LinearRewardTask, net: LinearSupernet },
    Toy { task: ToyTask, held_out: (Tensor, Tensor), frozen: Option<FrozenScorer> },
}

/// Held-out scoring for frozen weights: table lookups, with targets taken
/// from the same table so the teacher scores exactly zero.
struct FrozenScorer {
    table: ContributionTable,
    targets: Vec<f64>,
}

struct Rngs {
    train: RunRng,
    val: RunRng,
    weight_arch: RunRng,
    theta_arch: RunRng,
}

/// A single seeded run, stepped to completion by [`SearchRun::run`].
pub struct SearchRun {
    config: SearchConfig,
    seed: u64,
    problem: Problem,
    theta: DistributionParams,
    weights: WeightStore,
    theta_opt: OptimizerState,
    weight_opt: BTreeMap<(usize, usize), OptimizerState>,
    baseline: BaselineState,
    ema: EmaTable,
    rngs: Rngs,
    best: Option<ProcessBest>,
    cost: CostSummary,
    recovery: RecoveryTracker,
}

impl SearchRun {
    pub fn new(config: SearchConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let problem = match &config.task {
            TaskConfig::Linear(t) => {
                let task = match &t.rewards {
                    Some(rows) => LinearRewardTask::from_rewards(rows.clone())?,
                    None => LinearRewardTask::random(&mut stream(seed, Stream::Task), &t.sizes, t.low, t.high)?,
                };
                let net = task.to_supernet();
                Problem::Linear { task, net }
            }
            TaskConfig::Toy(t) => {
                let task = make_toy_task_with(*t, seed)?;
                let held_out = sample_toy_batch(&task, &mut stream(seed, Stream::TestData), config.run.test_batch_size)?;
                let frozen = if config.run.train_weights {
                    None
                } else {
                    let table = ContributionTable::new(&task, &held_out.0)?;
                    let targets = table.predict(&task.teacher);
                    Some(FrozenScorer { table, targets })
                };
                Problem::Toy { task, held_out, frozen }
            }
        };
        let (spec, weights) = match &problem {
            Problem::Linear { net, .. } => (&net.spec, net.weights.clone()),
            Problem::Toy { task, .. } => (&task.spec, task.weights.clone()),
        };
        let sizes = spec.choice_sizes();
        let theta = DistributionParams::constant(&sizes, config.run.theta_init);
        let theta_opt = OptimizerState::new(config.optimizer_theta, theta.as_vectors().as_flat().len());
        let ema = EmaTable::for_spec(spec, config.strategy.ema_decay);
        Ok(Self {
            seed,
            theta,
            weights,
            theta_opt,
            weight_opt: BTreeMap::new(),
            baseline: BaselineState::new(config.strategy.baseline_decay),
            ema,
            rngs: Rngs {
                train: stream(seed, Stream::TrainData),
                val: stream(seed, Stream::ValData),
                weight_arch: stream(seed, Stream::WeightArch),
                theta_arch: stream(seed, Stream::ThetaArch),
            },
            best: None,
            cost: CostSummary::default(),
            recovery: RecoveryTracker::default(),
            problem,
            config,
        })
    }

    pub fn theta(&self) -> &DistributionParams {
        &self.theta
    }

    /// Lets callers start from a chosen distribution.
    pub fn theta_mut(&mut self) -> &mut DistributionParams {
        &mut self.theta
    }

    pub fn weights(&self) -> &WeightStore {
        &self.weights
    }

    pub fn spec(&self) -> &SupernetSpec {
        match &self.problem {
            Problem::Linear { net, .. } => &net.spec,
            Problem::Toy { task, .. } => &task.spec,
        }
    }

    pub fn teacher(&self) -> Option<&Architecture> {
        match &self.problem {
            Problem::Toy { task, .. } => Some(&task.teacher),
            Problem::Linear { .. } => None,
        }
    }

    pub fn linear_task(&self) -> Option<&LinearRewardTask> {
        match &self.problem {
            Problem::Linear { task, .. } => Some(task),
            Problem::Toy { .. } => None,
        }
    }

    fn reward_kind(&self) -> RewardKind {
        match self.problem {
            Problem::Linear { .. } => RewardKind::Linear,
            Problem::Toy { .. } => RewardKind::Mse,
        }
    }

    fn batch(problem: &Problem, rng: &mut RunRng) -> Result<(Tensor, Option<Tensor>)> {
        match problem {
            Problem::Linear { net, .. } => Ok((net.batch.clone(), None)),
            Problem::Toy { task, .. } => {
                let (x, y) = sample_toy_batch(task, rng, task.config.batch_size)?;
                Ok((x, Some(y)))
            }
        }
    }

    /// Held-out loss of `arch`: regret on the linear task, test mse on the
    /// toy task.
    pub fn test_loss(&mut self, arch: &Architecture) -> Result<f64> {
        match &self.problem {
            Problem::Linear { task, .. } => Ok(task.best_reward() - task.linear_reward(arch)),
            Problem::Toy { frozen: Some(f), .. } => Ok(f.table.mse(arch, &f.targets)),
            Problem::Toy { task, held_out, .. } => {
                let (out, _) = forward_sparse(&task.spec, &self.weights, arch, &held_out.0)?;
                self.cost.test_forwards += 1;
                Ok(-minibatch_reward(&out, Some(&held_out.1), RewardKind::Mse)?)
            }
        }
    }

    fn weight_step(&mut self, iteration: u64, lr: f64) -> Result<()> {
        let kind = self.reward_kind();
        let (x, y) = Self::batch(&self.problem, &mut self.rngs.train)?;
        let arch = self.theta.sample(&mut self.rngs.weight_arch);
        let spec = match &self.problem {
            Problem::Linear { net, .. } => &net.spec,
            Problem::Toy { task, .. } => &task.spec,
        };
        let opts = PassOptions { taps: false, weight_grads: true };
        let mut pass = sparse_reward_pass(spec, &self.weights, &arch, &x, y.as_ref(), kind, opts)?;
        self.cost.weight_forwards += pass.cost.forwards;
        self.cost.weight_backwards += pass.cost.backwards;
        if !pass.reward.is_finite() {
            return Err(Error::NonFinite { iteration, edge: None, what: "training reward" });
        }
        if let Some((e, _, _)) = pass.weight_grads.iter().find(|(_, _, g)| !g.is_finite()) {
            return Err(Error::NonFinite { iteration, edge: spec.slot_of(*e), what: "weight gradient" });
        }
        if let Some(c) = self.config.optimizer_w.clip {
            let norm = libm::sqrt(pass.weight_grads.iter().map(|(_, _, g)| g.norm_sq()).sum());
            if norm > c {
                let scale = c / norm;
                for (_, _, g) in pass.weight_grads.iter_mut() {
                    g.data_mut().iter_mut().for_each(|v| *v *= scale);
                }
            }
        }
        let cfg = OptimizerConfig { clip: None, ..self.config.optimizer_w };
        for (e, j, g) in &pass.weight_grads {
            let w = self.weights.get_mut(*e, *j).ok_or(Error::UnknownEdge(*e))?;
            let st = self.weight_opt.entry((*e, *j)).or_insert_with(|| OptimizerState::new(cfg, g.len()));
            st.lr = lr;
            st.step(w.data_mut(), g.data())?;
        }
        Ok(())
    }

    fn theta_step(&mut self, iteration: u64, temperature: Option<f64>) -> Result<(Architecture, f64)> {
        let kind = self.reward_kind();
        let (x, y) = Self::batch(&self.problem, &mut self.rngs.val)?;
        let y = y.as_ref();
        let spec = match &self.problem {
            Problem::Linear { net, .. } => &net.spec,
            Problem::Toy { task, .. } => &task.spec,
        };
        let w = &self.weights;
        let theta = &self.theta;
        let strategy = &self.config.strategy;
        let (arch, reward, grad, cost): (Architecture, f64, GradientEstimate, PassCost) = match strategy.kind {
            EstimatorKind::Reinforce => {
                let arch = theta.sample(&mut self.rngs.theta_arch);
                let pass = sparse_reward_pass(spec, w, &arch, &x, y, kind, PassOptions::default())?;
                let g = reinforce_estimate(pass.reward, &mut self.baseline, theta, &arch)?;
                (arch, pass.reward, g, pass.cost)
            }
            EstimatorKind::AdvantageExact | EstimatorKind::AdvantageApprox => {
                let arch = theta.sample(&mut self.rngs.theta_arch);
                let (reward, mut adv, cost) = if strategy.kind == EstimatorKind::AdvantageExact {
                    exact_advantages(spec, w, &arch, &x, y, kind)?
                } else {
                    approx_advantages(spec, w, &arch, &x, y, kind)?
                };
                if strategy.zero_op_adjust {
                    adv = zero_op_adjust(&mut self.ema, &adv, &arch);
                }
                (arch.clone(), reward, policy_gradient_from_advantages(&adv, theta, &arch)?, cost)
            }
            EstimatorKind::DenseSoftmax => {
                let (reward, g, cost) = dense_softmax_gradient(spec, w, theta, &x, y, kind)?;
                (theta.argmax_architecture(), reward, g, cost)
            }
            EstimatorKind::GumbelSt => {
                let tau = temperature.expect("temperature set for the gumbel strategy");
                gumbel_st_estimate(spec, w, theta, tau, &mut self.rngs.theta_arch, &x, y, kind)?
            }
        };
        self.cost.add_theta(cost);
        if !reward.is_finite() {
            return Err(Error::NonFinite { iteration, edge: None, what: "reward" });
        }
        if let Some(slot) = grad.first_non_finite_edge() {
            return Err(Error::NonFinite { iteration, edge: Some(slot), what: "architecture gradient" });
        }
        self.theta_opt.step(self.theta.as_vectors_mut().as_flat_mut(), grad.as_flat())?;
        if !self.theta.is_finite() {
            return Err(Error::NonFinite { iteration, edge: None, what: "theta" });
        }
        Ok((arch, reward))
    }

    /// Runs pretraining and the full iteration budget.
    ///
    /// `clock` returns seconds on any monotonic scale; it only feeds
    /// [`RunRecord::elapsed_seconds`].
    pub fn run<S: RecordSink + ?Sized>(
        mut self,
        sink: &mut S,
        mut clock: Option<&mut dyn FnMut() -> f64>,
    ) -> Result<SearchOutcome> {
        let run = self.config.run.clone();
        let start = clock.as_mut().map(|c| c());
        for p in 0..run.pretrain_iterations {
            let lr = self.config.optimizer_w.lr_at(p, run.pretrain_iterations)?;
            self.weight_step(p, lr)?;
        }
        let horizon = run.iterations.max(1);
        for t in 0..run.iterations {
            let entropy = self.theta.entropy_mean();
            let argmax = self.theta.argmax_architecture();
            let lr_theta = self.config.optimizer_theta.lr_at(t, horizon)?;
            let lr_w = if run.train_weights {
                let lr = self.config.optimizer_w.lr_at(t, horizon)?;
                self.weight_step(t, lr)?;
                Some(lr)
            } else {
                None
            };
            let temperature = match self.config.strategy.kind {
                EstimatorKind::GumbelSt => Some(linear_schedule(
                    t,
                    horizon,
                    self.config.strategy.temperature_start,
                    self.config.strategy.temperature_end,
                )?),
                _ => None,
            };
            // Test loss uses the weights the theta step will see.
            let test_loss = if t % run.cadence == 0 {
                let l = self.test_loss(&argmax)?;
                if !l.is_finite() {
                    return Err(Error::NonFinite { iteration: t, edge: None, what: "test loss" });
                }
                Some(l)
            } else {
                None
            };
            self.theta_opt.lr = lr_theta;
            let (sampled, reward) = self.theta_step(t, temperature)?;
            if self.best.as_ref().is_none_or(|b| reward > b.reward) {
                self.best = Some(ProcessBest { reward, arch: sampled.clone(), iteration: t });
            }
            if let Some(teacher) = self.teacher() {
                let teacher = teacher.clone();
                self.recovery.observe(t, &argmax, &teacher);
            }
            let best = self.best.as_ref().expect("set above");
            let elapsed = match (clock.as_mut(), start) {
                (Some(c), Some(s)) => Some(c() - s),
                _ => None,
            };
            sink.record(&RunRecord {
                iteration: t,
                sampled_arch: sampled,
                reward,
                entropy_mean: entropy,
                argmax_arch: argmax,
                process_best_reward: best.reward,
                process_best_arch: best.arch.clone(),
                lr_w,
                lr_theta,
                temperature,
                test_loss,
                elapsed_seconds: elapsed,
            });
        }

        let argmax = self.theta.argmax_architecture();
        if let Some(teacher) = self.teacher() {
            let teacher = teacher.clone();
            self.recovery.observe(run.iterations, &argmax, &teacher);
        }
        let final_arch = select_final(run.selection_mode, &self.theta, self.best.as_ref())?;
        let final_test_loss = self.test_loss(&final_arch)?;
        let summary = RunSummary {
            seed: self.seed,
            strategy: self.config.strategy.kind,
            iterations: run.iterations,
            final_arch: final_arch.clone(),
            argmax_arch: argmax,
            process_best: self.best.clone(),
            final_entropy: self.theta.entropy_mean(),
            final_test_loss,
            teacher: self.teacher().cloned(),
            iterations_to_recovery: self.teacher().and(self.recovery.value()),
            cost: self.cost,
        };
        Ok(SearchOutcome { final_arch, theta: self.theta, weights: self.weights, summary })
    }
}

/// Builds and runs one seeded search, streaming records into `sink`.
pub fn run_search<S: RecordSink + ?Sized>(config: &SearchConfig, seed: u64, sink: &mut S) -> Result<SearchOutcome> {
    SearchRun::new(config.clone(), seed)?.run(sink, None)
}

impl core::fmt::Display for SelectionMode {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            SelectionMode::Argmax => "argmax",
            SelectionMode::ProcessBest => "process_best",
        })
    }
}
