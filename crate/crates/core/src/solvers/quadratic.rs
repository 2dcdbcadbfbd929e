use nalgebra::{Cholesky, DMatrix, DVector};

use super::{finish, RawSolution};
use crate::error::{Error, Result};
use crate::operator::Operator;
use crate::types::{RegParams, TikhonovSolution};

/// Minimize `½‖Ku − g‖² + η₁·½‖L₁u‖² + η₂·½‖L₂u‖²` through the normal
/// equations `(KᵀK + η₁L₁ᵀL₁ + η₂L₂ᵀL₂) u = Kᵀg` and a Cholesky factorization.
pub fn solve_quadratic(
    op: &Operator,
    g: &DVector<f64>,
    l1: &DMatrix<f64>,
    l2: &DMatrix<f64>,
    eta: RegParams,
) -> Result<TikhonovSolution> {
    let n = op.ncols();
    if l1.ncols() != n || l2.ncols() != n {
        return Err(Error::Dimension(format!("penalty operators must have {n} columns")));
    }
    if g.len() != op.nrows() {
        return Err(Error::Dimension("data length".into()));
    }
    let g1 = l1.tr_mul(l1);
    let g2 = l2.tr_mul(l2);
    let raw = solve_with_grams(op, g, [&g1, &g2], eta.as_array())?;
    Ok(finish(op, g, raw, eta.as_array(), |u| {
        [0.5 * (l1 * u).norm_squared(), 0.5 * (l2 * u).norm_squared()]
    }))
}

/// Returns `a` when `m = a·I`.
fn identity_multiple(m: &DMatrix<f64>) -> Option<f64> {
    let a = m[(0, 0)];
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let expect = if i == j { a } else { 0.0 };
            if m[(i, j)] != expect {
                return None;
            }
        }
    }
    Some(a)
}

pub(crate) fn solve_with_grams(
    op: &Operator,
    g: &DVector<f64>,
    grams: [&DMatrix<f64>; 2],
    w: [f64; 2],
) -> Result<RawSolution> {
    let (m, n) = (op.nrows(), op.ncols());
    if n == 0 {
        return Err(Error::Dimension("empty problem".into()));
    }
    let ktg = op.apply_adjoint(g);

    // Pure ridge with more unknowns than data: solve in data space,
    // u = Kᵀ(KKᵀ + cI)⁻¹g.
    if m < n {
        if let (Some(a1), Some(a2)) = (identity_multiple(grams[0]), identity_multiple(grams[1])) {
            let c = w[0] * a1 + w[1] * a2;
            if c > 0.0 {
                let mut a = op.outer_gram();
                for i in 0..m {
                    a[(i, i)] += c;
                }
                let chol = Cholesky::new(a).ok_or(Error::Singular)?;
                let u = op.apply_adjoint(&chol.solve(g));
                let res = (op.apply_adjoint(&op.apply(&u)) + &u * c - &ktg).amax();
                return checked(u, res);
            }
        }
    }

    let mut a = op.gram();
    for (gm, wi) in grams.iter().zip(w) {
        if wi != 0.0 {
            a += *gm * wi;
        }
    }
    let chol = Cholesky::new(a.clone()).ok_or(Error::Singular)?;
    let u = chol.solve(&ktg);
    let res = (&a * &u - &ktg).amax();
    checked(u, res)
}

fn checked(u: DVector<f64>, res: f64) -> Result<RawSolution> {
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular);
    }
    Ok(RawSolution { u, iterations: 1, converged: true, inner_residual: res, history: Vec::new() })
}
