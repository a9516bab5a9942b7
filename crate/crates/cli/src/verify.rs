//! `verify`: exact checks of the estimators and the autodiff engine on
//! random instances.

use advnas_core::autodiff::gradcheck::{check_op, CHECKED_OPS, GRADCHECK_TOLERANCE};
use advnas_core::diagnostics::{
    centered, improvement_bound_check, random_instance, unbiasedness_check, variance_gap, variance_gap_report,
    MomentEstimator,
};
use advnas_core::rng::{stream, RunRng, Stream};
use advnas_core::DistributionParams;
use rand::Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::{CliError, CliResult};

/// Largest allowed disagreement between enumerated and closed-form gaps.
pub const GAP_TOLERANCE: f64 = 1e-10;
/// Largest allowed residual of the gap's linear fit in the edge count.
pub const LINEARITY_TOLERANCE: f64 = 1e-9;
pub const EPSILONS: [f64; 3] = [1e-3, 1e-2, 1e-1];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Suite {
    /// Enumerated mean of the advantage estimators against the exact gradient.
    Unbiasedness,
    /// Expected log-improvement of one step against its lower bound.
    ImprovementBound,
    /// Variance gap between REINFORCE and the advantage estimator.
    VarianceGap,
    /// Finite-difference checks of every differentiable operation.
    Gradcheck,
}

impl Suite {
    pub fn default_instances(self) -> usize {
        match self {
            Suite::Unbiasedness => 100,
            Suite::ImprovementBound | Suite::VarianceGap => 20,
            Suite::Gradcheck => 50,
        }
    }

    pub fn supports_negative_control(self) -> bool {
        matches!(self, Suite::Unbiasedness | Suite::VarianceGap)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InstanceResult {
    pub suite: Suite,
    pub instance: usize,
    pub passed: bool,
    /// The checked error; its meaning depends on the suite.
    pub discrepancy: f64,
    pub detail: Value,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VerifyOptions {
    pub suite: Suite,
    pub instances: usize,
    pub seed: u64,
    /// Check a deliberately broken variant, which must fail.
    pub negative_control: bool,
}

fn core_err(e: advnas_core::Error) -> CliError {
    CliError::Verification(e.to_string())
}

pub fn run_suite(opts: &VerifyOptions) -> CliResult<Vec<InstanceResult>> {
    if opts.negative_control && !opts.suite.supports_negative_control() {
        return Err(CliError::Config(format!(
            "suite {:?} has no negative control; use unbiasedness or variance_gap",
            opts.suite
        )));
    }
    let mut rng = stream(opts.seed, Stream::Task);
    (0..opts.instances).map(|i| instance(opts, i, &mut rng)).collect()
}

fn instance(opts: &VerifyOptions, i: usize, rng: &mut RunRng) -> CliResult<InstanceResult> {
    let (passed, discrepancy, detail) = match opts.suite {
        Suite::Unbiasedness => {
            let (task, theta) = random_instance(rng, 2..=4, 2..=4, -1.0, 1.0).map_err(core_err)?;
            let kinds: &[MomentEstimator] = if opts.negative_control {
                &[MomentEstimator::CorruptedAdvantage]
            } else {
                &[MomentEstimator::AdvantageExact, MomentEstimator::AdvantageApprox]
            };
            let mut worst = 0.0f64;
            for &k in kinds {
                worst = worst.max(unbiasedness_check(&task, &theta, k).map_err(core_err)?.discrepancy);
            }
            let passed = worst <= advnas_core::diagnostics::UNBIASED_TOLERANCE;
            (passed, worst, json!({ "sizes": task.sizes(), "estimators": kinds }))
        }
        Suite::ImprovementBound => {
            let (task, theta) = random_instance(rng, 2..=4, 2..=4, 0.1, 1.0).map_err(core_err)?;
            let rep =
                improvement_bound_check(&task, &theta, MomentEstimator::AdvantageExact, &EPSILONS).map_err(core_err)?;
            let margin = rep.rows.iter().map(|r| r.lhs - r.rhs).fold(f64::INFINITY, f64::min);
            (rep.passed && rep.monotone, margin, json!({ "sizes": task.sizes(), "monotone": rep.monotone, "rows": rep.rows }))
        }
        Suite::VarianceGap => {
            let (task, theta) = random_instance(rng, 2..=4, 2..=3, -1.0, 1.0).map_err(core_err)?;
            let task = if opts.negative_control { task } else { centered(&task, &theta).map_err(core_err)? };
            let mut worst = 0.0f64;
            for e in 0..task.num_edges() {
                let g = variance_gap(&task, &theta, e).map_err(core_err)?;
                worst = worst.max((g.enumerated - g.closed_form).abs());
            }
            // Linearity in the edge count, on one edge replicated 2, 4, 8 times.
            let logits = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let mu = DistributionParams::from_logits(vec![logits.to_vec()]).map_err(core_err)?.probabilities(0);
            let r: [f64; 2] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let mean = if opts.negative_control { 0.0 } else { r[0] * mu[0] + r[1] * mu[1] };
            let rewards = [r[0] - mean, r[1] - mean];
            let rep = variance_gap_report(&rewards, &logits, &[2, 4, 8]).map_err(core_err)?;
            let worst = worst.max(rep.max_closed_form_error);
            let passed = worst <= GAP_TOLERANCE && rep.max_residual <= LINEARITY_TOLERANCE;
            (
                passed,
                worst,
                json!({ "sizes": task.sizes(), "slope": rep.slope, "max_residual": rep.max_residual }),
            )
        }
        Suite::Gradcheck => {
            let op = CHECKED_OPS[i % CHECKED_OPS.len()];
            let results = check_op(rng, op);
            let worst = results.iter().map(|r| r.relative_error).fold(0.0, f64::max);
            let shapes: Vec<&[usize]> = results.iter().map(|r| r.shape.as_slice()).collect();
            (worst <= GRADCHECK_TOLERANCE, worst, json!({ "op": op, "shapes": shapes }))
        }
    };
    Ok(InstanceResult { suite: opts.suite, instance: i, passed, discrepancy, detail })
}

/// Runs a suite, printing one JSON line per instance and a final tally.
/// Any failed instance is a verification error.
pub fn verify(opts: &VerifyOptions) -> CliResult<Vec<InstanceResult>> {
    let results = run_suite(opts)?;
    for r in &results {
        println!("{}", serde_json::to_string(r).expect("results serialize"));
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    let worst = results.iter().map(|r| r.discrepancy).fold(f64::NEG_INFINITY, f64::max);
    println!(
        "{}",
        json!({ "suite": opts.suite, "instances": results.len(), "failed": failed, "worst_discrepancy": worst })
    );
    if failed > 0 {
        return Err(CliError::Verification(format!("{failed} of {} instances failed", results.len())));
    }
    Ok(results)
}
