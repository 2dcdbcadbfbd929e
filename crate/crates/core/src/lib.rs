//! Two-parameter Tikhonov regularization.
//!
//! Solves `min_u ½‖Ku − g‖² + η₁ψ₁(u) + η₂ψ₂(u)` for a few penalty pairs and
//! picks `η = (η₁, η₂)` by the balancing principle or the balanced
//! discrepancy principle.

pub mod bundle;
pub mod error;
pub mod operator;
pub mod penalties;
pub mod problems;
pub mod selection;
pub mod solvers;
pub mod types;

pub use error::{Error, Result};
pub use operator::Operator;
pub use penalties::{eval_penalty, soft_threshold, ModelId, Penalty, PenaltyKind, PenaltyModel};
pub use problems::{build_problem, make_test_problem, Example, KernelId, KernelSpec, ProblemConfig};
pub use selection::{
    oracle_grid, oracle_single, phi_gamma, relative_error, residual_bdp, select_broyden, select_fixed_point,
    value_function, GridSpec, OracleResult, SelectionOptions,
};
pub use solvers::{
    elastic_net_kkt_violation, fidelity, h1tv_certificate, solve_elastic_net, solve_h1tv, solve_quadratic,
    solve_tikhonov, solve_tikhonov_warm, solve_weighted, SolverOptions,
};
pub use types::{
    weight_t, Grid, Layout, Principle, Problem, Provenance, RegParams, SelectionResult, TikhonovSolution, TraceEntry,
};
