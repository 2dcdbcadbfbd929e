//! Balanced discrepancy principle: solve `T(η) = 0` by Broyden's method.

use nalgebra::{Matrix2, Vector2};

use super::{residual_from, trace_entry, SelectionOptions};
use crate::error::{Error, Result};
use crate::penalties::PenaltyModel;
use crate::solvers::{solve_weighted, SolverOptions};
use crate::types::{Principle, Problem, RegParams, SelectionResult, TikhonovSolution};

const DEFAULT_TOL: f64 = 1e-6;
const DEFAULT_MAX_ITER: usize = 50;
const MAX_HALVINGS: usize = 30;
/// Stall test: less than 1% reduction of ‖T‖ over this many steps.
const STALL_WINDOW: usize = 5;

struct Evaluator<'a> {
    problem: &'a Problem,
    model: &'a PenaltyModel,
    base: SolverOptions,
    target: f64,
    tol_abs: f64,
}

impl Evaluator<'_> {
    fn eval(&self, eta: Vector2<f64>, warm: Option<&TikhonovSolution>, near: bool) -> Result<(TikhonovSolution, Vector2<f64>)> {
        let mut opts = self.base.clone();
        if near {
            // Keep inner error well below the outer tolerance.
            let f = warm.map(|s| s.objective()).unwrap_or(0.0);
            if f > 0.0 {
                let want = 1e-2 * self.tol_abs / f;
                opts.tol = Some(opts.tol.map_or(want, |t| t.min(want)).max(1e-15));
            }
        }
        let sol = solve_weighted(self.problem, self.model, [eta[0], eta[1]], &opts, warm.map(|s| &s.u))?;
        let t = residual_from(&sol, self.target);
        Ok((sol, Vector2::new(t[0], t[1])))
    }

    fn jacobian(&self, eta: Vector2<f64>, t0: Vector2<f64>, base: &TikhonovSolution, step: f64, near: bool) -> Result<Matrix2<f64>> {
        let mut j = Matrix2::zeros();
        for i in 0..2 {
            let mut e = eta;
            let h = step * eta[i];
            e[i] += h;
            let (_, t) = self.eval(e, Some(base), near)?;
            j.set_column(i, &((t - t0) / h));
        }
        Ok(j)
    }
}

/// Choose `η` with `½‖Ku − g‖² = ½c_m²δ²` and `η₁ψ₁(u) = η₂ψ₂(u)`.
pub fn select_broyden(problem: &Problem, model: &PenaltyModel, delta: f64, opts: &SelectionOptions) -> Result<SelectionResult> {
    opts.validate()?;
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("noise level {delta} must be > 0")));
    }
    let gnorm = problem.g_obs().norm();
    if opts.c_m * delta >= gnorm {
        return Err(Error::InvalidArgument(format!(
            "discrepancy target c_m*delta = {:e} is not below ‖g_obs‖ = {gnorm:e}",
            opts.c_m * delta
        )));
    }
    let target = 0.5 * opts.c_m * opts.c_m * delta * delta;
    let half_d2 = 0.5 * delta * delta;
    let tol = opts.outer_tol.unwrap_or(DEFAULT_TOL) * half_d2;
    let max_iter = opts.outer_max_iter.unwrap_or(DEFAULT_MAX_ITER);
    let ev = Evaluator { problem, model, base: opts.solver.clone(), target, tol_abs: tol };

    let eta0 = opts.eta0_for(problem)?;
    let mut eta = Vector2::new(eta0.eta1(), eta0.eta2());
    let (mut sol, mut t) = ev.eval(eta, None, false)?;
    let mut trace = vec![trace_entry(0, &sol, t.norm())];
    let mut near = t.norm() <= 1e2 * tol;
    let mut jac = ev.jacobian(eta, t, &sol, opts.fd_step, near)?;
    let mut best = (t.norm(), eta, sol.clone());
    let mut norms = vec![t.norm()];
    let mut last_refresh = 0usize;
    let mut fresh = true;

    for k in 1..=max_iter {
        if t.norm() <= tol {
            break;
        }
        let step = match solve2(&jac, &t) {
            Some(s) => s,
            None => {
                // One finite-difference retry before giving up.
                jac = ev.jacobian(eta, t, &sol, opts.fd_step, near)?;
                last_refresh = k;
                fresh = true;
                solve2(&jac, &t).ok_or_else(|| Error::SingularJacobian { iter: k, trace: trace.clone() })?
            }
        };
        let mut d = step;
        let mut halvings = 0;
        while (eta + d).iter().any(|v| *v <= 0.0) && halvings < MAX_HALVINGS {
            d /= 2.0;
            halvings += 1;
        }
        let mut next = eta + d;
        for v in next.iter_mut() {
            if *v <= 0.0 {
                *v = opts.eta_min;
            }
        }
        let d = next - eta;
        if d.norm() == 0.0 {
            break;
        }
        let (s_new, t_new) = ev.eval(next, Some(&sol), near)?;
        if t_new.norm() > t.norm() && !fresh {
            // The secant model has drifted; rebuild it here and retry.
            jac = ev.jacobian(eta, t, &sol, opts.fd_step, near)?;
            last_refresh = k;
            fresh = true;
            trace.push(trace_entry(k, &sol, t.norm()));
            norms.push(t.norm());
            continue;
        }
        let dt = t_new - t;
        jac += (dt - jac * d) * d.transpose() / d.norm_squared();
        fresh = false;
        eta = next;
        sol = s_new;
        t = t_new;
        near = near || t.norm() <= 1e2 * tol;
        trace.push(trace_entry(k, &sol, t.norm()));
        norms.push(t.norm());
        if t.norm() < best.0 {
            best = (t.norm(), eta, sol.clone());
        }
        if k >= last_refresh + STALL_WINDOW && norms[k] > 0.99 * norms[k - STALL_WINDOW] && t.norm() > tol {
            jac = ev.jacobian(eta, t, &sol, opts.fd_step, near)?;
            last_refresh = k;
            fresh = true;
        }
    }

    let converged = best.0 <= tol;
    let (_, eta, sol) = best;
    let eta_star = RegParams::new(eta[0], eta[1])?;
    let converged = converged && sol.converged;
    Ok(SelectionResult::new(eta_star, sol, trace, Principle::BalancedDiscrepancy, converged))
}

fn solve2(j: &Matrix2<f64>, t: &Vector2<f64>) -> Option<Vector2<f64>> {
    let det = j.determinant();
    let scale = j.norm_squared();
    if !det.is_finite() || det.abs() <= 1e-14 * scale || scale == 0.0 {
        return None;
    }
    let s = j.try_inverse()? * (-t);
    s.iter().all(|v| v.is_finite()).then_some(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selection::tests::scalar;

    #[test]
    fn scalar_closed_form() {
        let (p, m) = scalar(1.0, 0.5);
        let opts = SelectionOptions { eta0: Some(RegParams::new(0.1, 0.1).unwrap()), ..Default::default() };
        let r = select_broyden(&p, &m, 0.5, &opts).unwrap();
        assert!(r.converged);
        assert!((r.eta_star.eta1() - 0.5).abs() < 1e-8, "{:?}", r.eta_star);
        assert!((r.eta_star.eta2() - 0.5).abs() < 1e-8);
        assert!((r.weight_t - 0.5).abs() < 1e-12);
        assert_eq!(r.principle, Principle::BalancedDiscrepancy);
    }

    #[test]
    fn scalar_other_noise_levels() {
        // η₁ = η₂ = δ / (2(g − δ)) for g = 1.
        for delta in [0.1, 0.3, 0.8] {
            let (p, m) = scalar(1.0, delta);
            let r = select_broyden(&p, &m, delta, &SelectionOptions::default()).unwrap();
            let want = delta / (2.0 * (1.0 - delta));
            assert!(r.converged);
            assert!((r.eta_star.eta1() - want).abs() < 1e-6 * want.max(1.0), "{delta}: {:?}", r.eta_star);
        }
    }

    #[test]
    fn unattainable_discrepancy_rejected() {
        let (p, m) = scalar(1.0, 1.0);
        assert!(select_broyden(&p, &m, 1.0, &SelectionOptions::default()).is_err());
        assert!(select_broyden(&p, &m, 0.0, &SelectionOptions::default()).is_err());
    }
}
