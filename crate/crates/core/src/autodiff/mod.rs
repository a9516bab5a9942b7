//! Dense f64 tensors and a reverse-mode tape.
//!
//! Every op evaluates eagerly when it is recorded. `Tape::backward` walks the
//! tape from the root towards the leaves; because nodes only ever reference
//! earlier nodes, index order is a topological order.

pub mod gradcheck;
mod tape;
mod tensor;

pub use tape::{Activation, Gradients, Tape, Var};
pub use tensor::Tensor;
