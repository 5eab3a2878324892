//! Minimal dense-tensor engine: exactly the differentiable operations the
//! shuffle-exchange architecture needs, a reverse-mode tape, and a
//! central-difference gradient checker.

mod gradcheck;
mod graph;
pub mod kernels;
mod permutation;
mod real;
mod tensor;

pub use gradcheck::{compare_gradient, gradcheck, relative_error, GradCheckReport};
pub use graph::{Eager, Graph, Tape, Var};
pub use permutation::Permutation;
pub use real::{DType, Real};
pub use tensor::Tensor;

/// Variance smoothing inside the LayerNorm square root.
pub const LAYERNORM_EPS: f64 = 1e-5;
