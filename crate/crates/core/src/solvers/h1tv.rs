//! H¹–TV model `½‖Ku − g‖² + η₁|u|²_{H¹} + η₂|Du|₁` by ADMM on the split
//! `z = Du`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{finish, quadratic, RawSolution, SolverOptions};
use crate::error::{Error, Result};
use crate::operator::Operator;
use crate::penalties::{dtd, grad, grad_adjoint, grad_len, soft, tv_of_gradient};
use crate::types::{Layout, RegParams, TikhonovSolution};

const DEFAULT_TOL: f64 = 1e-8;
const DEFAULT_MAX_ITER: usize = 5000;
const POLISH_AFTER: usize = 20;

/// 1-D H¹–TV solve on a uniform grid with spacing `grid_h`.
pub fn solve_h1tv(
    op: &Operator,
    g: &DVector<f64>,
    eta: RegParams,
    grid_h: f64,
    opts: &SolverOptions,
) -> Result<TikhonovSolution> {
    opts.validate()?;
    if g.len() != op.nrows() {
        return Err(Error::Dimension("data length".into()));
    }
    if !(grid_h > 0.0) {
        return Err(Error::InvalidArgument(format!("grid spacing {grid_h} must be > 0")));
    }
    let layout = Layout::Signal(op.ncols());
    let w = eta.as_array();
    let raw = run(op, g, w, grid_h, layout, false, opts, None)?;
    Ok(finish(op, g, raw, w, |u| {
        let du = grad(u, layout);
        [du.norm_squared() / grid_h, du.lp_norm(1)]
    }))
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn run(
    op: &Operator,
    g: &DVector<f64>,
    w: [f64; 2],
    grid_h: f64,
    layout: Layout,
    isotropic: bool,
    opts: &SolverOptions,
    warm: Option<&DVector<f64>>,
) -> Result<RawSolution> {
    let n = op.ncols();
    let smooth = dtd(layout) * (2.0 / grid_h);
    if w[1] == 0.0 {
        let zero = DMatrix::zeros(n, n);
        return quadratic::solve_with_grams(op, g, [&smooth, &zero], [w[0], 0.0]);
    }
    let tol = opts.tol.unwrap_or(DEFAULT_TOL);
    let max_iter = opts.max_iter.unwrap_or(DEFAULT_MAX_ITER);
    let rho = opts.admm_rho.unwrap_or(w[1]);
    let thresh = w[1] / rho;
    let p = grad_len(layout);

    let mut a = op.gram() + &smooth * w[0];
    a += dtd(layout) * rho;
    let chol = Cholesky::new(a).ok_or(Error::Singular)?;
    let ktg = op.apply_adjoint(g);
    let ktg_norm = ktg.norm();
    let objective = |u: &DVector<f64>| {
        let du = grad(u, layout);
        0.5 * (op.apply(u) - g).norm_squared()
            + w[0] * du.norm_squared() / grid_h
            + w[1] * tv_of_gradient(&du, layout, isotropic)
    };

    let mut u = warm.cloned().unwrap_or_else(|| DVector::zeros(n));
    let mut z = grad(&u, layout);
    let mut dual = DVector::<f64>::zeros(p);
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut inner_residual = f64::INFINITY;

    let one_d = matches!(layout, Layout::Signal(_)) && opts.polish;
    let mut pattern = jump_pattern(&z);
    let mut stable = 0usize;
    let mut polish_after = POLISH_AFTER;

    for it in 1..=max_iter {
        iterations = it;
        let rhs = &ktg + grad_adjoint(&(&z - &dual), layout) * rho;
        u = chol.solve(&rhs);
        let du = grad(&u, layout);
        let z_old = std::mem::replace(&mut z, shrink(&(&du + &dual), thresh, layout, isotropic));
        dual += &du - &z;

        let r = (&du - &z).norm();
        let s = rho * grad_adjoint(&(&z - &z_old), layout).norm();
        // Floors keep the test meaningful when the solution is flat.
        let scale_p = du.norm().max(z.norm()).max(1e-3 * u.norm());
        let scale_d = (rho * grad_adjoint(&dual, layout).norm()).max(1e-3 * ktg_norm);
        inner_residual = (r / scale_p.max(f64::MIN_POSITIVE)).max(s / scale_d.max(f64::MIN_POSITIVE));
        if opts.record_history {
            history.push(objective(&u));
        }
        if !u.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("ADMM iterate"));
        }
        if r <= tol * scale_p && s <= tol * scale_d {
            converged = true;
            break;
        }

        if one_d {
            let pat = jump_pattern(&z);
            if pat == pattern {
                stable += 1;
            } else {
                pattern = pat;
                stable = 0;
            }
            if stable >= polish_after {
                if let Some((v, viol)) = polish_1d(op, g, &ktg, w, grid_h, &z) {
                    if opts.record_history {
                        history.push(objective(&v));
                    }
                    return Ok(RawSolution { u: v, iterations: it, converged: true, inner_residual: viol, history });
                }
                polish_after *= 2;
                stable = 0;
            }
        }
    }

    if one_d {
        if let Some((v, viol)) = polish_1d(op, g, &ktg, w, grid_h, &z) {
            if opts.record_history {
                history.push(objective(&v));
            }
            return Ok(RawSolution { u: v, iterations, converged: true, inner_residual: viol, history });
        }
    }
    Ok(RawSolution { u, iterations, converged, inner_residual, history })
}

fn shrink(v: &DVector<f64>, tau: f64, layout: Layout, isotropic: bool) -> DVector<f64> {
    match (layout, isotropic) {
        (Layout::Image { rows, cols }, true) => {
            let np = rows * cols;
            let mut out = v.clone();
            for q in 0..np {
                let norm = v[q].hypot(v[np + q]);
                let f = if norm > tau { 1.0 - tau / norm } else { 0.0 };
                out[q] *= f;
                out[np + q] *= f;
            }
            out
        }
        _ => v.map(|x| soft(x, tau)),
    }
}

fn jump_pattern(z: &DVector<f64>) -> Vec<i8> {
    z.iter().map(|v| if *v > 0.0 { 1 } else if *v < 0.0 { -1 } else { 0 }).collect()
}

/// First-order optimality violation of a 1-D H¹–TV candidate, in units of
/// η₂: the dual variable `q` with `Dᵀq = −r` is unique in 1-D, so the
/// check is a cumulative sum.
pub fn h1tv_certificate(op: &Operator, g: &DVector<f64>, w: [f64; 2], grid_h: f64, u: &DVector<f64>) -> f64 {
    let layout = Layout::Signal(u.len());
    let du = grad(u, layout);
    let r = op.apply_adjoint(&(op.apply(u) - g)) + grad_adjoint(&du, layout) * (2.0 * w[0] / grid_h);
    let n = u.len();
    let mut q = 0.0;
    let mut worst: f64 = 0.0;
    for i in 0..n.saturating_sub(1) {
        q += r[i];
        let v = if du[i] != 0.0 { (q - w[1] * du[i].signum()).abs() } else { (q.abs() - w[1]).max(0.0) };
        worst = worst.max(v);
    }
    // Closing condition Σ r = 0.
    worst = worst.max((q + r[n - 1]).abs());
    worst
}

/// Exact solve with the jump set and signs of `z` fixed: `u` is constant
/// between jumps. Returned only when the full optimality check passes.
fn polish_1d(
    op: &Operator,
    g: &DVector<f64>,
    ktg: &DVector<f64>,
    w: [f64; 2],
    grid_h: f64,
    z: &DVector<f64>,
) -> Option<(DVector<f64>, f64)> {
    let n = op.ncols();
    if n < 2 {
        return None;
    }
    // Group index per node.
    let mut group = vec![0usize; n];
    let mut jumps = Vec::new();
    for i in 0..n - 1 {
        let next = if z[i] != 0.0 {
            jumps.push(i);
            group[i] + 1
        } else {
            group[i]
        };
        group[i + 1] = next;
    }
    let ng = group[n - 1] + 1;
    let p = DMatrix::from_fn(n, ng, |i, k| if group[i] == k { 1.0 } else { 0.0 });
    let kp = op.matrix() * &p;
    let mut a = kp.tr_mul(&kp);
    // H¹ term between groups: (2η₁/h) Σ_jumps (v_{k+1} − v_k)².
    let c = 2.0 * w[0] / grid_h;
    let mut b = p.tr_mul(ktg);
    for (k, &j) in jumps.iter().enumerate() {
        a[(k, k)] += c;
        a[(k + 1, k + 1)] += c;
        a[(k, k + 1)] -= c;
        a[(k + 1, k)] -= c;
        let s = z[j].signum();
        b[k] += w[1] * s;
        b[k + 1] -= w[1] * s;
    }
    let v = Cholesky::<f64, Dyn>::new(a)?.solve(&b);
    for (k, &j) in jumps.iter().enumerate() {
        if !((v[k + 1] - v[k]) * z[j] > 0.0) {
            return None;
        }
    }
    let u = &p * v;
    let viol = h1tv_certificate(op, g, w, grid_h, &u);
    let slack = 1e-9 * w[1] + 1e-12 * ktg.amax();
    (viol <= slack).then_some((u, viol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_test_problem, Example};

    #[test]
    fn constants_pass_through() {
        let n = 30;
        let op = Operator::new(DMatrix::identity(n, n));
        let g = DVector::from_element(n, 1.7);
        let eta = RegParams::new(0.3, 0.2).unwrap();
        let s = solve_h1tv(&op, &g, eta, 0.1, &SolverOptions::default()).unwrap();
        assert!((&s.u - &g).amax() < 1e-8);
        let s = solve_h1tv(&op, &g, eta, 0.1, &SolverOptions { polish: false, ..Default::default() }).unwrap();
        assert!(s.converged);
    }

    #[test]
    fn quadratic_limit() {
        let p = make_test_problem(Example::Ex41, None, 5e-2, 1).unwrap();
        let h = p.grid().h;
        let s = solve_h1tv(p.operator(), p.g_obs(), RegParams::new(1e-3, 1e-12).unwrap(), h, &SolverOptions::default())
            .unwrap();
        let l1 = crate::penalties::grad_matrix(p.layout()) * (2.0 / h).sqrt();
        let zero = DMatrix::zeros(1, p.n());
        let q = crate::solvers::solve_quadratic(p.operator(), p.g_obs(), &l1, &zero, RegParams::new(1e-3, 1.0).unwrap())
            .unwrap();
        assert!((&s.u - &q.u).amax() < 1e-6, "{}", (&s.u - &q.u).amax());
    }

    #[test]
    fn polished_and_plain_admm_agree() {
        let p = make_test_problem(Example::Ex41, None, 5e-2, 2).unwrap();
        let h = p.grid().h;
        let eta = RegParams::new(1e-4, 1e-3).unwrap();
        let a = solve_h1tv(p.operator(), p.g_obs(), eta, h, &SolverOptions::default()).unwrap();
        let opts = SolverOptions { polish: false, max_iter: Some(50_000), ..Default::default() };
        let b = solve_h1tv(p.operator(), p.g_obs(), eta, h, &opts).unwrap();
        assert!(a.converged);
        assert!(a.objective() <= b.objective() * (1.0 + 1e-9), "{} vs {}", a.objective(), b.objective());
        assert!((a.objective() - b.objective()).abs() <= 1e-6 * a.objective());
    }

    #[test]
    fn image_layout_runs() {
        let layout = Layout::Image { rows: 6, cols: 5 };
        let n = layout.len();
        let op = Operator::new(DMatrix::identity(n, n));
        let g = DVector::from_fn(n, |i, _| if i % 5 < 2 { 1.0 } else { 0.0 });
        for iso in [false, true] {
            let r = run(&op, &g, [1e-3, 0.05], 1.0, layout, iso, &SolverOptions::default(), None).unwrap();
            assert!(r.converged);
            let err = (&r.u - &g).amax();
            assert!(err < 0.2, "{err}");
        }
    }
}
