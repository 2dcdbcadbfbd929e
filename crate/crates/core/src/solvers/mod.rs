//! Inner solvers for `min_u ½‖Ku − g‖² + η₁ψ₁(u) + η₂ψ₂(u)`.
//!
//! Every public entry point returns a [`TikhonovSolution`] whose `phi` and
//! `psi` are recomputed from the returned `u`.

mod elastic_net;
mod h1tv;
mod quadratic;

pub use elastic_net::{elastic_net_kkt_violation, solve_elastic_net};
pub use h1tv::{h1tv_certificate, solve_h1tv};
pub use quadratic::solve_quadratic;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::operator::Operator;
use crate::penalties::{ModelId, PenaltyModel};
use crate::types::{Problem, RegParams, TikhonovSolution};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Relative stopping tolerance. Defaults: 1e-8 (ADMM), 1e-10 (proximal
    /// gradient, on the relative objective change).
    pub tol: Option<f64>,
    /// Iteration cap. Defaults: 5000 (ADMM), 20000 (proximal gradient).
    pub max_iter: Option<usize>,
    /// ADMM penalty parameter; defaults to η₂.
    pub admm_rho: Option<f64>,
    /// Try an exact reduced solve on the detected support / jump set and
    /// keep it when it passes the optimality check.
    pub polish: bool,
    /// Record the objective after every iteration.
    pub record_history: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: None, max_iter: None, admm_rho: None, polish: true, record_history: false }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if let Some(t) = self.tol {
            if !(t > 0.0) {
                return Err(Error::InvalidArgument(format!("solver tol {t} must be > 0")));
            }
        }
        if self.max_iter == Some(0) {
            return Err(Error::InvalidArgument("solver max_iter must be >= 1".into()));
        }
        if let Some(r) = self.admm_rho {
            if !(r > 0.0) {
                return Err(Error::InvalidArgument(format!("admm rho {r} must be > 0")));
            }
        }
        Ok(())
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = Some(tol);
        self
    }

    pub fn with_max_iter(mut self, n: usize) -> Self {
        self.max_iter = Some(n);
        self
    }
}

/// Minimize the two-penalty functional for `problem` at `eta`.
pub fn solve_tikhonov(
    problem: &Problem,
    model: &PenaltyModel,
    eta: RegParams,
    opts: &SolverOptions,
) -> Result<TikhonovSolution> {
    solve_weighted(problem, model, eta.as_array(), opts, None)
}

/// As [`solve_tikhonov`], starting from `warm` where the solver is iterative.
pub fn solve_tikhonov_warm(
    problem: &Problem,
    model: &PenaltyModel,
    eta: RegParams,
    opts: &SolverOptions,
    warm: Option<&DVector<f64>>,
) -> Result<TikhonovSolution> {
    solve_weighted(problem, model, eta.as_array(), opts, warm)
}

/// Like [`solve_tikhonov`] but with nonnegative weights, so a zero weight
/// switches one penalty off (single-penalty reference models).
pub fn solve_weighted(
    problem: &Problem,
    model: &PenaltyModel,
    weights: [f64; 2],
    opts: &SolverOptions,
    warm: Option<&DVector<f64>>,
) -> Result<TikhonovSolution> {
    opts.validate()?;
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "weights ({:e}, {:e}) must be finite and >= 0",
            weights[0], weights[1]
        )));
    }
    if model.layout() != problem.layout() {
        return Err(Error::Dimension("penalty model and problem layouts differ".into()));
    }
    if let Some(w) = warm {
        if w.len() != problem.n() {
            return Err(Error::Dimension("warm start length".into()));
        }
    }
    let op = problem.operator();
    let g = problem.g_obs();
    let raw = match model.id() {
        ModelId::QuadQuad => {
            let grams = [
                model.penalty(0).quadratic_gram().expect("quadratic"),
                model.penalty(1).quadratic_gram().expect("quadratic"),
            ];
            quadratic::solve_with_grams(op, g, [&grams[0], &grams[1]], weights)?
        }
        ModelId::ElasticNet if weights[0] == 0.0 => {
            // Plain ridge.
            let eye = model.penalty(1).quadratic_gram().expect("quadratic");
            quadratic::solve_with_grams(op, g, [&eye, &eye], weights)?
        }
        ModelId::ElasticNet => elastic_net::run(op, g, weights, opts, warm)?,
        ModelId::H1Tv => {
            let p = model.penalty(1);
            h1tv::run(op, g, weights, model.penalty(0).grid_h, p.layout, p.isotropic, opts, warm)?
        }
    };
    Ok(finish(op, g, raw, weights, |u| model.eval(u)))
}

/// Iterate produced by a solver before bookkeeping.
pub(crate) struct RawSolution {
    pub u: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub inner_residual: f64,
    pub history: Vec<f64>,
}

pub(crate) fn finish(
    op: &Operator,
    g: &DVector<f64>,
    raw: RawSolution,
    weights: [f64; 2],
    psi: impl Fn(&DVector<f64>) -> [f64; 2],
) -> TikhonovSolution {
    let phi = fidelity(op, g, &raw.u);
    let psi = psi(&raw.u);
    TikhonovSolution {
        u: raw.u,
        weights,
        phi,
        psi,
        iterations: raw.iterations,
        converged: raw.converged,
        inner_residual: raw.inner_residual,
        history: raw.history,
    }
}

/// `½‖K u − g‖²`
pub fn fidelity(op: &Operator, g: &DVector<f64>, u: &DVector<f64>) -> f64 {
    0.5 * (op.apply(u) - g).norm_squared()
}
