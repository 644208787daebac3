//! Adaptive proximal gradient methods for constrained optimization.
//!
//! The crate provides
//!
//! * the family of adaptive first-order schemes (AdaGrad, Adam, AMSGrad,
//!   AdamX, PAdam) expressed as a mean estimate `phi` and a scale `psi`
//!   ([`scheme`]),
//! * a small library of proximal operators and ordered chains of them
//!   ([`prox`]),
//! * the classical proximal gradient method and AdaProx, which follows the
//!   adaptive gradient step with a scaled (variable-metric) proximal solve
//!   ([`solver`]),
//! * constrained matrix factorization problems with analytic gradients and
//!   Lipschitz constants ([`problems`]),
//! * seeded generators for the synthetic test scenes ([`datagen`]).
//!
//! All tensors are dense row-major `f64` matrices ([`ndarray::Array2`]);
//! vectors are represented as single-row matrices.

pub mod block;
pub mod datagen;
pub mod error;
pub mod linalg;
pub mod problems;
pub mod prox;
pub mod scheme;
pub mod solver;
pub mod step;

pub use block::ParameterBlock;
pub use error::{Error, Result};
pub use problems::{MixMfProblem, MultiBandProblem, NmfProblem, Problem};
pub use prox::{ProxChain, ProxOperator};
pub use scheme::{Beta1Schedule, Scheme, SchemeConfig, SchemeState};
pub use solver::{solve, solve_with_observer, Mode, RunTrace, SolveFailure, SolverConfig, Termination};
pub use step::{StepSchedule, StepSize};
