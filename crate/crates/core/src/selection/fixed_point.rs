//! Balancing principle: fixed-point iteration for critical points of
//! `Φ_γ(η) = F(η)^{γ+2} / (η₁η₂)`.

use super::{trace_entry, SelectionOptions};
use crate::error::{Error, Result};
use crate::penalties::PenaltyModel;
use crate::solvers::solve_tikhonov_warm;
use crate::types::{Principle, Problem, RegParams, SelectionResult};

const DEFAULT_TOL: f64 = 1e-6;
const DEFAULT_MAX_ITER: usize = 200;

/// Iterate `η_i ← (φ + η_{−i}ψ_{−i}) / ((1 + γ)ψ_i)` from `opts.eta0`.
///
/// A fixed point satisfies `γη_iψ_i = φ` for both `i`. No damping is
/// applied; if the map is repelling the run ends unconverged.
pub fn select_fixed_point(problem: &Problem, model: &PenaltyModel, gamma: f64, opts: &SelectionOptions) -> Result<SelectionResult> {
    let opts = SelectionOptions { gamma, ..opts.clone() };
    opts.validate()?;
    let tol = opts.outer_tol.unwrap_or(DEFAULT_TOL);
    let max_iter = opts.outer_max_iter.unwrap_or(DEFAULT_MAX_ITER);

    let mut eta = opts.eta0_for(problem)?;
    let mut sol = solve_tikhonov_warm(problem, model, eta, &opts.solver, None)?;
    let mut trace = vec![trace_entry(0, &sol, f64::NAN)];
    let mut converged = false;
    let scale = problem.g_obs().norm_squared().max(f64::MIN_POSITIVE);

    for k in 1..=max_iter {
        let [e1, e2] = eta.as_array();
        for (i, &p) in sol.psi.iter().enumerate() {
            if !(p > opts.eta_min * scale * f64::EPSILON) {
                return Err(Error::PenaltyDegenerate { index: i + 1, value: p, iter: k });
            }
        }
        let next = [
            (sol.phi + e2 * sol.psi[1]) / ((1.0 + gamma) * sol.psi[0]),
            (sol.phi + e1 * sol.psi[0]) / ((1.0 + gamma) * sol.psi[1]),
        ];
        let change = ((next[0] - e1) / e1).abs().max(((next[1] - e2) / e2).abs());
        let Ok(next) = RegParams::try_from(next) else {
            // Left the positive quadrant or overflowed: report the last
            // valid iterate.
            break;
        };
        eta = next;
        sol = solve_tikhonov_warm(problem, model, eta, &opts.solver, Some(&sol.u))?;
        trace.push(trace_entry(k, &sol, change));
        if change < tol {
            converged = sol.converged;
            break;
        }
    }
    Ok(SelectionResult::new(eta, sol, trace, Principle::Balancing, converged))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selection::tests::scalar;

    // For K = I with two ½‖u‖² penalties and η₁ = η₂ = η the update is
    // η ← 2η² + η/2 when γ = 1: the fixed point 1/4 has slope 3/2.
    #[test]
    fn scalar_map_matches_closed_form() {
        let (p, m) = scalar(1.0, 0.5);
        for e in [0.1, 0.2, 0.3] {
            let opts = SelectionOptions {
                eta0: Some(RegParams::new(e, e).unwrap()),
                outer_max_iter: Some(1),
                ..Default::default()
            };
            let r = select_fixed_point(&p, &m, 1.0, &opts).unwrap();
            let want = 2.0 * e * e + e / 2.0;
            assert!((r.eta_star.eta1() - want).abs() < 1e-14, "{} vs {want}", r.eta_star.eta1());
            assert_eq!(r.eta_star.eta1(), r.eta_star.eta2());
        }
    }

    #[test]
    fn scalar_fixed_point_is_stationary() {
        let (p, m) = scalar(1.0, 0.5);
        for (gamma, star) in [(1.0, 0.25), (2.0, 0.5)] {
            let opts = SelectionOptions { eta0: Some(RegParams::new(star, star).unwrap()), ..Default::default() };
            let r = select_fixed_point(&p, &m, gamma, &opts).unwrap();
            assert!(r.converged);
            assert!((r.eta_star.eta1() - star).abs() < 1e-12);
            let s = &r.solution;
            assert!((gamma * star * s.psi[0] - s.phi).abs() < 1e-14);
        }
    }

    #[test]
    fn scalar_fixed_point_repels() {
        let (p, m) = scalar(1.0, 0.5);
        let start = |e: f64| SelectionOptions { eta0: Some(RegParams::new(e, e).unwrap()), ..Default::default() };
        let below = select_fixed_point(&p, &m, 1.0, &start(0.24)).unwrap();
        assert!(!below.converged);
        assert!(below.eta_star.eta1() < 1e-6);
        // Above it η blows up until u, and with it ψ, underflows.
        let above = select_fixed_point(&p, &m, 1.0, &start(0.26));
        assert!(matches!(above, Err(Error::PenaltyDegenerate { .. })), "{above:?}");
    }

    #[test]
    fn zero_penalty_detected() {
        let (p, m) = scalar(0.0, 0.5);
        let r = select_fixed_point(&p, &m, 1.0, &SelectionOptions::default());
        assert!(matches!(r, Err(Error::PenaltyDegenerate { index: 1, .. })));
    }
}
