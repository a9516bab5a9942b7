//! Central finite-difference gradient checks.
//!
//! The checks only ever call the forward path, so they are an independent
//! oracle for [`Tape::backward`].

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{Activation, Tape, Tensor, Var};
use crate::rng::uniform;

/// Central differences of `f` at `x`, one coordinate at a time.
pub fn finite_difference(x: &Tensor, step: f64, mut f: impl FnMut(&Tensor) -> f64) -> Tensor {
    let mut probe = x.clone();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let up = f(&probe);
        probe.data_mut()[i] = orig - step;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        out.push((up - down) / (2.0 * step));
    }
    Tensor::from_parts(x.shape().to_vec(), out)
}

/// `||a - b|| / max(||a||, ||b||)`, zero when both vanish.
pub fn relative_error(a: &Tensor, b: &Tensor) -> f64 {
    let diff: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
    let scale = libm::sqrt(a.norm_sq()).max(libm::sqrt(b.norm_sq()));
    if scale == 0.0 {
        0.0
    } else {
        libm::sqrt(diff) / scale
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckResult {
    pub op: &'static str,
    /// Shape of the checked argument.
    pub shape: Vec<usize>,
    pub relative_error: f64,
}

pub const GRADCHECK_STEP: f64 = 1e-5;
pub const GRADCHECK_TOLERANCE: f64 = 1e-5;

pub const CHECKED_OPS: [&str; 9] =
    ["conv2d", "tanh", "identity", "add", "sum_n", "scale", "scale_by", "mean_over", "mse"];

fn random_tensor<R: Rng + ?Sized>(rng: &mut R, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_parts(shape.to_vec(), (0..n).map(|_| uniform(rng, -1.0, 1.0)).collect())
}

fn random_shape<R: Rng + ?Sized>(rng: &mut R) -> Vec<usize> {
    let rank = rng.random_range(1..=4);
    (0..rank).map(|_| rng.random_range(1..=4)).collect()
}

/// Builds `mse(op(args), target)` for the named op. Returns the loss node and
/// the leaf vars, in argument order.
fn build(tape: &mut Tape, op: &str, args: &[Tensor], target: &Tensor, extra: f64, axes: &[usize]) -> (Var, Vec<Var>) {
    let leaves: Vec<Var> = args.iter().map(|a| tape.leaf(a.clone())).collect();
    let out = match op {
        "conv2d" => tape.conv2d(leaves[0], leaves[1], extra as usize).expect("shapes chosen valid"),
        "tanh" => tape.activation(leaves[0], Activation::Tanh),
        "identity" => tape.activation(leaves[0], Activation::Identity),
        "add" => tape.add(leaves[0], leaves[1]).expect("same shape"),
        "sum_n" => tape.sum_n(&leaves).expect("same shape"),
        "scale" => tape.scale(leaves[0], extra),
        "scale_by" => tape.scale_by(leaves[0], leaves[1]).expect("scalar"),
        "mean_over" => tape.mean_over(leaves[0], axes).expect("axes in range"),
        "mse" => return (tape.mse(leaves[0], leaves[1]).expect("same shape"), leaves),
        _ => unreachable!("unknown op {op}"),
    };
    let t = tape.constant(target.clone());
    (tape.mse(out, t).expect("target shaped like output"), leaves)
}

/// Runs one randomized check of `op`, comparing every argument's gradient
/// with central differences.
pub fn check_op<R: Rng + ?Sized>(rng: &mut R, op: &'static str) -> Vec<GradcheckResult> {
    let mut extra = 0.0;
    let mut axes = Vec::new();
    let args: Vec<Tensor> = match op {
        "conv2d" => {
            let n = rng.random_range(1..=2);
            let cin = rng.random_range(1..=2);
            let cout = rng.random_range(1..=2);
            let kh = rng.random_range(1..=3);
            let kw = rng.random_range(1..=3);
            let stride = rng.random_range(1..=2);
            let h = kh + rng.random_range(0..=3);
            let w = kw + rng.random_range(0..=3);
            extra = stride as f64;
            vec![random_tensor(rng, &[n, h, w, cin]), random_tensor(rng, &[kh, kw, cin, cout])]
        }
        "add" | "mse" => {
            let s = random_shape(rng);
            vec![random_tensor(rng, &s), random_tensor(rng, &s)]
        }
        "sum_n" => {
            let s = random_shape(rng);
            let k = rng.random_range(1..=4);
            (0..k).map(|_| random_tensor(rng, &s)).collect()
        }
        "scale" => {
            extra = uniform(rng, -2.0, 2.0);
            let s = random_shape(rng);
            vec![random_tensor(rng, &s)]
        }
        "scale_by" => {
            let s = random_shape(rng);
            vec![random_tensor(rng, &s), random_tensor(rng, &[1])]
        }
        "mean_over" => {
            let s = random_shape(rng);
            axes = (0..s.len()).filter(|_| rng.random_bool(0.5)).collect();
            vec![random_tensor(rng, &s)]
        }
        _ => {
            let s = random_shape(rng);
            vec![random_tensor(rng, &s)]
        }
    };
    // The op's output shape decides the target shape.
    let target = {
        let mut tape = Tape::new();
        let leaves: Vec<Var> = args.iter().map(|a| tape.constant(a.clone())).collect();
        let shape = match op {
            "conv2d" => {
                let v = tape.conv2d(leaves[0], leaves[1], extra as usize).expect("valid");
                tape.value(v).shape().to_vec()
            }
            "mean_over" => {
                let v = tape.mean_over(leaves[0], &axes).expect("valid");
                tape.value(v).shape().to_vec()
            }
            _ => args[0].shape().to_vec(),
        };
        random_tensor(rng, &shape)
    };
    let mut tape = Tape::new();
    let (loss, leaves) = build(&mut tape, op, &args, &target, extra, &axes);
    let grads = tape.backward(loss).expect("scalar loss");
    (0..args.len())
        .map(|k| {
            let numeric = finite_difference(&args[k], GRADCHECK_STEP, |x| {
                let mut moved = args.clone();
                moved[k] = x.clone();
                let mut tp = Tape::new();
                let (l, _) = build(&mut tp, op, &moved, &target, extra, &axes);
                tp.value(l).data()[0]
            });
            GradcheckResult {
                op,
                shape: args[k].shape().to_vec(),
                relative_error: relative_error(&grads.get(leaves[k]), &numeric),
            }
        })
        .collect()
}
