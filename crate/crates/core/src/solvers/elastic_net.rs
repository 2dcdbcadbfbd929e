//! Elastic net, `½‖Ku − g‖² + η₁‖u‖₁ + (η₂/2)‖u‖²`, by accelerated proximal
//! gradient (FISTA) with a restart whenever the objective would increase.

use nalgebra::{DMatrix, DVector};

use super::{finish, RawSolution, SolverOptions};
use crate::error::{Error, Result};
use crate::operator::Operator;
use crate::penalties::soft_threshold;
#[cfg(test)]
use crate::penalties::soft;
use crate::types::{RegParams, TikhonovSolution};

const DEFAULT_TOL: f64 = 1e-10;
const DEFAULT_MAX_ITER: usize = 20_000;
/// First active-set attempt; later ones at doubling iteration counts.
const POLISH_AFTER: usize = 20;
/// Active-set steps allowed for a polish attempt made mid-run.
const EARLY_POLISH_STEPS: usize = 10;
/// Larger supports on a sparse operator are solved matrix-free.
const DENSE_SUPPORT: usize = 300;

pub fn solve_elastic_net(
    op: &Operator,
    g: &DVector<f64>,
    eta: RegParams,
    opts: &SolverOptions,
) -> Result<TikhonovSolution> {
    opts.validate()?;
    if g.len() != op.nrows() {
        return Err(Error::Dimension("data length".into()));
    }
    let w = eta.as_array();
    let raw = run(op, g, w, opts, None)?;
    Ok(finish(op, g, raw, w, |u| [u.lp_norm(1), 0.5 * u.norm_squared()]))
}

struct Objective<'a> {
    g: &'a DVector<f64>,
    w: [f64; 2],
}

impl Objective<'_> {
    /// Objective value given `u` and `K u`.
    fn value(&self, u: &DVector<f64>, ku: &DVector<f64>) -> f64 {
        0.5 * (ku - self.g).norm_squared() + self.w[0] * u.lp_norm(1) + 0.5 * self.w[1] * u.norm_squared()
    }
}

pub(crate) fn run(
    op: &Operator,
    g: &DVector<f64>,
    w: [f64; 2],
    opts: &SolverOptions,
    warm: Option<&DVector<f64>>,
) -> Result<RawSolution> {
    let tol = opts.tol.unwrap_or(DEFAULT_TOL);
    let max_iter = opts.max_iter.unwrap_or(DEFAULT_MAX_ITER);
    let n = op.ncols();
    let ktg = op.apply_adjoint(g);
    let obj = Objective { g, w };

    let mut lip = op.spectral_norm_sq(1e-8, 10_000) * (1.0 + 1e-6) + w[1];
    if !(lip > 0.0) {
        lip = 1.0;
    }
    let gradient = |x: &DVector<f64>, kx: &DVector<f64>| op.apply_adjoint(&(kx - g)) + x * w[1];
    let prox_step = |x: &DVector<f64>, grad: &DVector<f64>, lip: f64| soft_threshold(&(x - grad / lip), w[0] / lip);
    let smooth = |x: &DVector<f64>, kx: &DVector<f64>| 0.5 * (kx - g).norm_squared() + 0.5 * w[1] * x.norm_squared();

    let mut x = warm.cloned().unwrap_or_else(|| DVector::zeros(n));
    let mut kx = op.apply(&x);
    let mut fx = obj.value(&x, &kx);
    let mut y = x.clone();
    let mut ky = kx.clone();
    let mut t = 1.0_f64;
    let mut history = Vec::new();

    let mut polish_at = POLISH_AFTER;
    let mut converged = false;
    let mut iterations = 0;
    let mut quiet = 0usize;

    for it in 1..=max_iter {
        iterations = it;
        let mut x_new = prox_step(&y, &gradient(&y, &ky), lip);
        let mut kx_new = op.apply(&x_new);
        let mut f_new = obj.value(&x_new, &kx_new);
        let mut stalled = false;
        let restarted = f_new > fx;
        if restarted {
            // Momentum overshot: restart with a plain proximal step from x.
            t = 1.0;
            let gx = gradient(&x, &kx);
            let sx = smooth(&x, &kx);
            loop {
                x_new = prox_step(&x, &gx, lip);
                kx_new = op.apply(&x_new);
                f_new = obj.value(&x_new, &kx_new);
                if f_new <= fx {
                    break;
                }
                // The power-iteration estimate of the Lipschitz constant can
                // fall short; backtrack on the quadratic upper bound.
                let d = &x_new - &x;
                let bound = sx + gx.dot(&d) + 0.5 * lip * d.norm_squared();
                if smooth(&x_new, &kx_new) <= bound * (1.0 + 4.0 * f64::EPSILON) {
                    break;
                }
                lip *= 2.0;
            }
            if f_new > fx {
                // Rounding floor; x is as good as this step size can do.
                x_new = x.clone();
                kx_new = kx.clone();
                f_new = fx;
                stalled = true;
            }
        }
        let rel = (fx - f_new).abs() / f_new.abs().max(f64::MIN_POSITIVE);
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_new;
        y = &x_new + (&x_new - &x) * beta;
        ky = &kx_new + (&kx_new - &kx) * beta;
        x = x_new;
        kx = kx_new;
        fx = f_new;
        t = t_new;
        if opts.record_history {
            history.push(fx);
        }

        if opts.polish && it == polish_at {
            if let Some(u) = polish(op, g, &ktg, w, &x, EARLY_POLISH_STEPS) {
                return Ok(polished(op, g, w, u, it, history, &obj));
            }
            polish_at *= 2;
        }
        // A single small change right after a restart says little.
        quiet = if rel < tol && !restarted { quiet + 1 } else { 0 };
        if stalled || quiet >= 3 {
            converged = true;
            break;
        }
    }

    if opts.polish {
        if let Some(u) = polish(op, g, &ktg, w, &x, 4 * n + 50) {
            return Ok(polished(op, g, w, u, iterations, history, &obj));
        }
    }
    let inner_residual = elastic_net_kkt_violation(op, g, w, &x);
    Ok(RawSolution { u: x, iterations, converged, inner_residual, history })
}

fn polished(
    op: &Operator,
    g: &DVector<f64>,
    w: [f64; 2],
    u: DVector<f64>,
    iterations: usize,
    mut history: Vec<f64>,
    obj: &Objective<'_>,
) -> RawSolution {
    if !history.is_empty() {
        let ku = op.apply(&u);
        let f = obj.value(&u, &ku);
        // The exact minimizer cannot be worse than the last iterate.
        let last = *history.last().unwrap();
        history.push(f.min(last));
    }
    let inner_residual = elastic_net_kkt_violation(op, g, w, &u);
    RawSolution { u, iterations, converged: true, inner_residual, history }
}

/// Largest violation of the first-order conditions
/// `−(Kᵀ(Ku − g) + η₂u) ∈ η₁ ∂‖u‖₁`.
pub fn elastic_net_kkt_violation(op: &Operator, g: &DVector<f64>, w: [f64; 2], u: &DVector<f64>) -> f64 {
    let grad = op.apply_adjoint(&(op.apply(u) - g)) + u * w[1];
    grad.iter()
        .zip(u.iter())
        .map(|(gi, ui)| {
            if *ui == 0.0 {
                (gi.abs() - w[0]).max(0.0)
            } else {
                (gi + w[0] * ui.signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Active-set refinement from `x` (feature-sign search): fix the signs of
/// the current nonzeros plus the coordinates that violate the optimality
/// bound, minimize the resulting quadratic exactly, and line-search over
/// the points where a coordinate changes sign. Every accepted step lowers
/// the objective. Returns the point only if it passes the full optimality
/// check.
fn polish(
    op: &Operator,
    g: &DVector<f64>,
    ktg: &DVector<f64>,
    w: [f64; 2],
    x: &DVector<f64>,
    max_steps: usize,
) -> Option<DVector<f64>> {
    let n = x.len();
    let slack = 1e-10 * w[0] + 1e-13 * ktg.amax();
    let obj = Objective { g, w };
    let mut u = x.clone();
    let mut f = obj.value(&u, &op.apply(&u));
    let mut add_all = true;
    for _ in 0..max_steps {
        let grad = op.apply_adjoint(&(op.apply(&u) - g)) + &u * w[1];
        let mut violators: Vec<(usize, f64)> = (0..n)
            .filter(|&i| u[i] == 0.0 && grad[i].abs() > w[0] + slack)
            .map(|i| (i, grad[i].abs() - w[0]))
            .collect();
        let on_support_ok = (0..n).all(|i| u[i] == 0.0 || (grad[i] + w[0] * u[i].signum()).abs() <= slack);
        if violators.is_empty() && on_support_ok {
            return Some(exact_on_support(op, g, ktg, w, u, slack));
        }
        if !on_support_ok {
            // Re-solve on the current support first; adding coordinates is a
            // descent step only from a point stationary on its support.
            violators.clear();
        }
        if !add_all && violators.len() > 1 {
            let worst = violators.iter().cloned().fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
            violators = vec![worst];
        }
        let mut signs = DVector::<f64>::zeros(n);
        for i in 0..n {
            if u[i] != 0.0 {
                signs[i] = u[i].signum();
            }
        }
        for &(i, _) in &violators {
            signs[i] = -grad[i].signum();
        }
        let target = solve_on_signs(op, g, ktg, w, &signs, &u)?;

        let (cand, fb) = line_search(op, g, w, &u, &target);
        if fb < f {
            u = cand;
            f = fb;
            add_all = true;
        } else if add_all && violators.len() > 1 {
            add_all = false;
        } else {
            break;
        }
    }
    (elastic_net_kkt_violation(op, g, w, &u) <= slack).then_some(u)
}

/// Minimizer of the objective with the signs of the nonzeros fixed to
/// `signs`, ignoring whether the result keeps them.
fn solve_on_signs(
    op: &Operator,
    g: &DVector<f64>,
    ktg: &DVector<f64>,
    w: [f64; 2],
    signs: &DVector<f64>,
    start: &DVector<f64>,
) -> Option<DVector<f64>> {
    let n = signs.len();
    let support: Vec<usize> = (0..n).filter(|&i| signs[i] != 0.0).collect();
    if w[1] == 0.0 && support.len() > op.nrows() {
        return None;
    }
    let sol = if op.is_sparse() && support.len() > DENSE_SUPPORT {
        let rhs = DVector::from_fn(support.len(), |k, _| ktg[support[k]] - w[0] * signs[support[k]]);
        let v0 = DVector::from_fn(support.len(), |k, _| start[support[k]]);
        reduced_cg(op, &support, w[1], &rhs, v0)?
    } else {
        let s_sub = DVector::from_fn(support.len(), |k, _| signs[support[k]]);
        reduced_qr(op, g, &support, w, &s_sub)?
    };
    let mut out = DVector::zeros(n);
    for (k, &i) in support.iter().enumerate() {
        out[i] = sol[k];
    }
    Some(out)
}

/// A point that passes the optimality check within `slack` may still sit
/// that far from the minimizer, e.g. a warm start after a tiny parameter
/// change. Re-solve exactly on its sign pattern and keep the result when
/// the pattern survives.
fn exact_on_support(op: &Operator, g: &DVector<f64>, ktg: &DVector<f64>, w: [f64; 2], u: DVector<f64>, slack: f64) -> DVector<f64> {
    let signs = u.map(|v| if v == 0.0 { 0.0 } else { v.signum() });
    let Some(v) = solve_on_signs(op, g, ktg, w, &signs, &u) else {
        return u;
    };
    let same_signs = v.iter().zip(signs.iter()).all(|(a, s)| if *s == 0.0 { *a == 0.0 } else { a.signum() == *s && *a != 0.0 });
    if same_signs && elastic_net_kkt_violation(op, g, w, &v) <= slack {
        v
    } else {
        u
    }
}

/// Solve `(K_SᵀK_S + w₂I) v = K_Sᵀg − w₁s` through a QR factorization of
/// the stacked matrix `[K_S; √w₂ I]`, which avoids squaring the condition
/// number of `K_S`.
fn reduced_qr(op: &Operator, g: &DVector<f64>, support: &[usize], w: [f64; 2], signs: &DVector<f64>) -> Option<DVector<f64>> {
    let m = op.nrows();
    let s = support.len();
    let ks = op.columns(support);
    let mut a = DMatrix::zeros(m + s, s);
    a.view_mut((0, 0), (m, s)).copy_from(&ks);
    let root = w[1].sqrt();
    for d in 0..s {
        a[(m + d, d)] = root;
    }
    let mut b = DVector::zeros(m + s);
    b.rows_mut(0, m).copy_from(g);
    let qr = a.qr();
    let r = qr.r();
    if (0..s).any(|d| r[(d, d)] == 0.0) {
        return None;
    }
    // RᵀR v = Rᵀ(Qᵀb) − w₁s, so R v = Qᵀb − w₁R⁻ᵀs.
    let qtb = qr.q().tr_mul(&b);
    let shift = r.transpose().solve_lower_triangular(signs)?;
    let v = r.solve_upper_triangular(&(qtb - shift * w[0]))?;
    v.iter().all(|x| x.is_finite()).then_some(v)
}

/// Jacobi-preconditioned CG for `(K_SᵀK_S + w₂I) v = rhs`. `None` if the
/// residual does not reach rounding level.
fn reduced_cg(op: &Operator, support: &[usize], w2: f64, rhs: &DVector<f64>, mut v: DVector<f64>) -> Option<DVector<f64>> {
    let n = op.ncols();
    let k = op.matrix();
    let diag = DVector::from_fn(support.len(), |i, _| k.column(support[i]).norm_squared() + w2);
    if diag.iter().any(|d| !(*d > 0.0)) {
        return None;
    }
    let apply = |x: &DVector<f64>| {
        let mut full = DVector::zeros(n);
        for (i, &j) in support.iter().enumerate() {
            full[j] = x[i];
        }
        let back = op.apply_adjoint(&op.apply(&full));
        DVector::from_fn(support.len(), |i, _| back[support[i]] + w2 * x[i])
    };
    let target = 1e-14 * rhs.norm();
    let mut r = rhs - apply(&v);
    let mut z = r.component_div(&diag);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    for _ in 0..(20 * support.len()).max(100) {
        if r.norm() <= target {
            return Some(v);
        }
        let ap = apply(&p);
        let alpha = rz / p.dot(&ap);
        if !alpha.is_finite() {
            break;
        }
        v += &p * alpha;
        r -= &ap * alpha;
        z = r.component_div(&diag);
        let rz_new = r.dot(&z);
        p = &z + &p * (rz_new / rz);
        rz = rz_new;
    }
    (r.norm() <= 1e3 * target).then_some(v)
}

/// Exact minimizer of the objective on the segment from `u` to `target`.
/// Along the segment the smooth part is a quadratic in `t` and the ℓ¹ part
/// is piecewise linear with kinks where a coordinate crosses zero.
fn line_search(
    op: &Operator,
    g: &DVector<f64>,
    w: [f64; 2],
    u: &DVector<f64>,
    target: &DVector<f64>,
) -> (DVector<f64>, f64) {
    let d = target - u;
    let ku = op.apply(u);
    let kd = op.apply(&d);
    let s1 = (&ku - g).dot(&kd) + w[1] * u.dot(&d);
    let s2 = 0.5 * (kd.norm_squared() + w[1] * d.norm_squared());
    let mut kinks: Vec<(f64, usize)> = (0..u.len())
        .filter(|&i| d[i] != 0.0)
        .map(|i| (-u[i] / d[i], i))
        .filter(|(t, _)| *t > 0.0 && *t < 1.0)
        .collect();
    kinks.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Slope of the ℓ¹ term just after t.
    let l1_slope = |t: f64| -> f64 {
        (0..u.len())
            .filter(|&i| d[i] != 0.0)
            .map(|i| {
                let v = u[i] + t * d[i];
                let sgn = if v != 0.0 { v.signum() } else { d[i].signum() };
                sgn * d[i]
            })
            .sum::<f64>()
            * w[0]
    };
    let mut lo = 0.0;
    let mut t_best = 1.0;
    let mut zero_at: Option<usize> = None;
    for k in 0..=kinks.len() {
        let hi = if k < kinks.len() { kinks[k].0 } else { 1.0 };
        let c = l1_slope(0.5 * (lo + hi));
        let t = if s2 > 0.0 { -(s1 + c) / (2.0 * s2) } else if s1 + c < 0.0 { hi } else { lo };
        if t <= lo {
            t_best = lo;
            break;
        }
        if t < hi {
            t_best = t;
            break;
        }
        // Still descending at the end of this piece.
        t_best = hi;
        zero_at = (k < kinks.len()).then(|| kinks[k].1);
        lo = hi;
    }
    let mut v = u + d * t_best;
    if let Some(i) = zero_at {
        if t_best == kinks.iter().find(|(_, j)| *j == i).map_or(-1.0, |k| k.0) {
            v[i] = 0.0;
        }
    }
    let f = Objective { g, w }.value(&v, &op.apply(&v));
    (v, f)
}

/// Closed form for `K = I`, used in tests: `soft(g, η₁)/(1 + η₂)`.
#[cfg(test)]
pub(crate) fn identity_solution(g: &DVector<f64>, w: [f64; 2]) -> DVector<f64> {
    g.map(|x| soft(x, w[0]) / (1.0 + w[1]))
}
