//! Parameter choice: value function, balancing functional, balanced
//! discrepancy residual, and the grid oracle.

mod broyden;
mod fixed_point;
mod oracle;

pub use broyden::select_broyden;
pub use fixed_point::select_fixed_point;
pub use oracle::{oracle_grid, oracle_single, GridSpec, OracleResult};

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DVector;

use crate::bundle::fmt_num;
use crate::error::{Error, Result};
use crate::penalties::PenaltyModel;
use crate::solvers::{solve_tikhonov_warm, SolverOptions};
use crate::types::{Problem, RegParams, TikhonovSolution, TraceEntry};

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionOptions {
    /// Balancing exponent γ.
    pub gamma: f64,
    /// Discrepancy safety factor, target `φ = ½c_m²δ²`.
    pub c_m: f64,
    /// Initial guess; `None` uses [`default_eta0`].
    pub eta0: Option<RegParams>,
    /// `None`: 1e-6 for both loops (relative to ½δ² for Broyden, relative
    /// η change for the fixed point).
    pub outer_tol: Option<f64>,
    /// `None`: 50 Broyden steps, 200 fixed-point steps.
    pub outer_max_iter: Option<usize>,
    /// Relative step of the finite-difference Jacobian.
    pub fd_step: f64,
    /// Floor used when a Broyden step would leave the positive quadrant.
    pub eta_min: f64,
    pub solver: SolverOptions,
}

impl Default for SelectionOptions {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            c_m: 1.0,
            eta0: None,
            outer_tol: None,
            outer_max_iter: None,
            fd_step: 1e-3,
            eta_min: 1e-14,
            solver: SolverOptions::default(),
        }
    }
}

impl SelectionOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::InvalidArgument(format!("{what} = {v} out of range")));
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad("gamma", self.gamma);
        }
        if !(self.c_m >= 1.0 && self.c_m.is_finite()) {
            return bad("c_m", self.c_m);
        }
        if let Some(t) = self.outer_tol {
            if !(t > 0.0) {
                return bad("outer_tol", t);
            }
        }
        if self.outer_max_iter == Some(0) {
            return Err(Error::InvalidArgument("outer_max_iter must be >= 1".into()));
        }
        if !(self.fd_step > 0.0 && self.fd_step < 1.0) {
            return bad("fd_step", self.fd_step);
        }
        if !(self.eta_min > 0.0) {
            return bad("eta_min", self.eta_min);
        }
        self.solver.validate()
    }

    pub fn eta0_for(&self, problem: &Problem) -> Result<RegParams> {
        match self.eta0 {
            Some(e) => Ok(e),
            None => default_eta0(problem),
        }
    }
}

/// `(1e-2, 1e-2)` times the mean square of the data.
pub fn default_eta0(problem: &Problem) -> Result<RegParams> {
    let g = problem.g_obs();
    let scale = g.norm_squared() / g.len() as f64;
    let e = if scale > 0.0 { 1e-2 * scale } else { 1e-2 };
    RegParams::new(e, e)
}

/// `F(η) = φ(u_η) + η₁ψ₁(u_η) + η₂ψ₂(u_η)`.
pub fn value_function(problem: &Problem, model: &PenaltyModel, eta: RegParams, opts: &SolverOptions) -> Result<f64> {
    Ok(solve_tikhonov_warm(problem, model, eta, opts, None)?.objective())
}

/// `Φ_γ(η) = F(η)^{γ+2} / (η₁η₂)`.
pub fn phi_gamma(problem: &Problem, model: &PenaltyModel, eta: RegParams, gamma: f64, opts: &SolverOptions) -> Result<f64> {
    let f = value_function(problem, model, eta, opts)?;
    phi_gamma_from_value(f, eta, gamma)
}

pub fn phi_gamma_from_value(f: f64, eta: RegParams, gamma: f64) -> Result<f64> {
    if !(f > 0.0) {
        return Err(Error::DegenerateValue(eta.eta1(), eta.eta2()));
    }
    Ok(f.powf(gamma + 2.0) / (eta.eta1() * eta.eta2()))
}

/// `T(η) = (φ − c + η₂ψ₂ − η₁ψ₁, φ − c + η₁ψ₁ − η₂ψ₂)` with `c = ½c_m²δ²`.
pub fn residual_bdp(
    problem: &Problem,
    model: &PenaltyModel,
    eta: RegParams,
    delta: f64,
    c_m: f64,
    opts: &SolverOptions,
) -> Result<[f64; 2]> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("noise level {delta} must be > 0")));
    }
    let sol = solve_tikhonov_warm(problem, model, eta, opts, None)?;
    Ok(residual_from(&sol, 0.5 * c_m * c_m * delta * delta))
}

pub(crate) fn residual_from(sol: &TikhonovSolution, c: f64) -> [f64; 2] {
    let b1 = sol.weights[0] * sol.psi[0];
    let b2 = sol.weights[1] * sol.psi[1];
    [sol.phi - c + b2 - b1, sol.phi - c + b1 - b2]
}

/// `‖u − u_true‖ / ‖u_true‖`
pub fn relative_error(u: &DVector<f64>, u_true: &DVector<f64>) -> Result<f64> {
    if u.len() != u_true.len() {
        return Err(Error::Dimension("relative_error operands".into()));
    }
    let nt = u_true.norm();
    if nt == 0.0 {
        return Err(Error::ZeroTruth);
    }
    Ok((u - u_true).norm() / nt)
}

pub(crate) fn trace_entry(iter: usize, sol: &TikhonovSolution, residual: f64) -> TraceEntry {
    TraceEntry { iter, eta: sol.weights, phi: sol.phi, psi: sol.psi, residual }
}

/// CSV text with header `iter,eta1,eta2,phi,psi1,psi2,residual_norm`.
pub fn trace_csv(trace: &[TraceEntry]) -> String {
    let mut s = String::from("iter,eta1,eta2,phi,psi1,psi2,residual_norm\n");
    for t in trace {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            t.iter,
            fmt_num(t.eta[0]),
            fmt_num(t.eta[1]),
            fmt_num(t.phi),
            fmt_num(t.psi[0]),
            fmt_num(t.psi[1]),
            fmt_num(t.residual)
        );
    }
    s
}

pub fn write_trace_csv(path: &Path, trace: &[TraceEntry]) -> Result<()> {
    std::fs::write(path, trace_csv(trace))?;
    Ok(())
}
