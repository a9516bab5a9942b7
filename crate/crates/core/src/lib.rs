//! Sparse-propagation one-shot neural architecture search.
//!
//! The crate is `no_std` (it needs `alloc`) and contains everything that is
//! pure computation:
//!
//! * [`autodiff`]: a small dense-tensor engine with reverse-mode AD.
//! * [`supernet`]: DAG supernets with shared weights and sparse, dense and
//!   edge-zeroed forward passes.
//! * [`distribution`]: the independent categorical architecture distribution.
//! * [`estimators`]: REINFORCE, exact and approximate per-edge advantages,
//!   the zero-operation EMA correction and two relaxation comparators.
//! * [`optim`]: Adam, Nesterov SGD, gradient clipping and schedules.
//! * [`tasks`]: the linear-reward task, the teacher/student toy task and the
//!   exhaustive-enumeration oracle.
//! * [`diagnostics`]: exact moment, unbiasedness, improvement-bound and
//!   variance-gap checks.
//! * [`search`]: the alternating weight/architecture search loop.
//!
//! File formats, logging and the command line live in the `advnas` crate.

#![no_std]
#![forbid(unsafe_code)]
// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod autodiff;
pub mod diagnostics;
pub mod distribution;
mod error;
pub mod estimators;
pub mod optim;
pub mod rng;
pub mod search;
pub mod supernet;
pub mod tasks;
mod vectors;

pub use autodiff::{Gradients, Tape, Tensor, Var};
pub use distribution::DistributionParams;
pub use error::{Error, Result};
pub use estimators::{AdvantageVector, GradientEstimate};
pub use supernet::{Architecture, SupernetSpec, WeightStore};
pub use vectors::EdgeVectors;
