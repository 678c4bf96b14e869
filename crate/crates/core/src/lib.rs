//! Multilevel Picard approximation of semilinear parabolic PDEs
//!
//! ```text
//! u_t + ½ tr(σσᵀ ∇²u) + ⟨μ, ∇u⟩ + f(t, x, u, ∇u) = 0,   u(T, ·) = g,
//! ```
//!
//! estimating `u(t, x)` and `∇u(t, x)` jointly. Gradients come from a
//! Bismut–Elworthy–Li weight carried along each simulated path.

pub mod cost;
pub mod error;
pub mod mlp;
pub mod model;
pub mod oracle;
pub mod paths;
pub mod problems;
pub mod sampler;

pub use cost::{
    cost_bound_sum, cost_recursion, unit_path_cost, CostCounters, CostReport, LogValue,
};
pub use error::{Error, Result};
pub use mlp::{
    estimate, estimate_traced, rmse_study, sample_runs, Estimate, MlpConfig, Reference, StudyRow,
};
pub use model::{Matrix, PdeProblem, ProblemBuilder, Vector};
pub use oracle::{closed_form_linear, picard_reference, PicardConfig, ReferenceEstimate, TimeRule};
pub use paths::{simulate_euler, simulate_exact, PathState};
pub use problems::builtin;
pub use sampler::{Namespace, Sign, StreamKey, TimeSampler};
