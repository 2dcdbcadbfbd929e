//! Shared domain types.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::operator::Operator;

/// Geometry of the unknown.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Signal(usize),
    Image { rows: usize, cols: usize },
}

impl Layout {
    pub fn len(&self) -> usize {
        match *self {
            Layout::Signal(n) => n,
            Layout::Image { rows, cols } => rows * cols,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Abscissae of a uniform grid: interval `[a, b]` with spacing `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub a: f64,
    pub b: f64,
    pub h: f64,
}

impl Grid {
    pub fn uniform(a: f64, b: f64, n: usize) -> Self {
        Self { a, b, h: (b - a) / n as f64 }
    }

    /// Unit spacing over `[0, n]`.
    pub fn unit(n: usize) -> Self {
        Self { a: 0.0, b: n as f64, h: 1.0 }
    }

    /// Cell midpoints `a + (j - 1/2) h`, `j = 1..=n`.
    pub fn midpoints(&self, n: usize) -> Vec<f64> {
        (0..n).map(|j| self.a + (j as f64 + 0.5) * self.h).collect()
    }
}

/// How a problem instance was generated.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub example: String,
    pub eps: f64,
    pub seed: u64,
}

/// A discrete linear inverse problem `K u = g` with noisy data.
#[derive(Debug, Clone)]
pub struct Problem {
    op: Operator,
    u_true: Option<DVector<f64>>,
    g_true: Option<DVector<f64>>,
    g_obs: DVector<f64>,
    delta: f64,
    grid: Grid,
    layout: Layout,
    provenance: Option<Provenance>,
}

impl Problem {
    pub fn new(
        k: DMatrix<f64>,
        g_obs: DVector<f64>,
        delta: f64,
        grid: Grid,
        layout: Layout,
    ) -> Result<Self> {
        if g_obs.len() != k.nrows() {
            return Err(Error::Dimension(format!(
                "g_obs has {} entries, K has {} rows",
                g_obs.len(),
                k.nrows()
            )));
        }
        if layout.len() != k.ncols() {
            return Err(Error::Dimension(format!(
                "layout holds {} unknowns, K has {} columns",
                layout.len(),
                k.ncols()
            )));
        }
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(Error::InvalidArgument(format!("noise level {delta} must be >= 0")));
        }
        if k.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("K"));
        }
        if g_obs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("g_obs"));
        }
        Ok(Self {
            op: Operator::new(k),
            u_true: None,
            g_true: None,
            g_obs,
            delta,
            grid,
            layout,
            provenance: None,
        })
    }

    /// Unit-grid 1-D problem, mostly for small fixtures.
    pub fn from_data(k: DMatrix<f64>, g_obs: DVector<f64>, delta: f64) -> Result<Self> {
        let n = k.ncols();
        Self::new(k, g_obs, delta, Grid::unit(n), Layout::Signal(n))
    }

    /// Attach the exact solution and exact data. `delta` must already be the
    /// realized noise norm `‖g_obs − g_true‖`.
    pub fn with_truth(mut self, u_true: DVector<f64>, g_true: Option<DVector<f64>>) -> Result<Self> {
        if u_true.len() != self.n() {
            return Err(Error::Dimension(format!(
                "u_true has {} entries, expected {}",
                u_true.len(),
                self.n()
            )));
        }
        if let Some(g) = &g_true {
            if g.len() != self.m() {
                return Err(Error::Dimension(format!(
                    "g_true has {} entries, expected {}",
                    g.len(),
                    self.m()
                )));
            }
            let realized = (&self.g_obs - g).norm();
            if (self.delta - realized).abs() > 1e-12 * (1.0 + g.norm()) {
                return Err(Error::InvalidArgument(format!(
                    "delta {:e} differs from realized noise norm {:e}",
                    self.delta, realized
                )));
            }
        }
        self.u_true = Some(u_true);
        self.g_true = g_true;
        Ok(self)
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = Some(provenance);
        self
    }

    pub fn m(&self) -> usize {
        self.op.nrows()
    }

    pub fn n(&self) -> usize {
        self.op.ncols()
    }

    pub fn k(&self) -> &DMatrix<f64> {
        self.op.matrix()
    }

    pub fn operator(&self) -> &Operator {
        &self.op
    }

    pub fn u_true(&self) -> Option<&DVector<f64>> {
        self.u_true.as_ref()
    }

    pub fn g_true(&self) -> Option<&DVector<f64>> {
        self.g_true.as_ref()
    }

    pub fn g_obs(&self) -> &DVector<f64> {
        &self.g_obs
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn provenance(&self) -> Option<&Provenance> {
        self.provenance.as_ref()
    }
}

/// Strictly positive regularization parameter pair `(η₁, η₂)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegParams {
    eta1: f64,
    eta2: f64,
}

impl RegParams {
    pub fn new(eta1: f64, eta2: f64) -> Result<Self> {
        if eta1 > 0.0 && eta2 > 0.0 && eta1.is_finite() && eta2.is_finite() {
            Ok(Self { eta1, eta2 })
        } else {
            Err(Error::InvalidParams(eta1, eta2))
        }
    }

    pub fn eta1(&self) -> f64 {
        self.eta1
    }

    pub fn eta2(&self) -> f64 {
        self.eta2
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.eta1, self.eta2]
    }

    pub fn get(&self, i: usize) -> f64 {
        self.as_array()[i]
    }
}

impl TryFrom<[f64; 2]> for RegParams {
    type Error = Error;

    fn try_from(v: [f64; 2]) -> Result<Self> {
        RegParams::new(v[0], v[1])
    }
}

/// Weight `t(η) = η₁ / (η₁ + η₂)` of the first penalty.
pub fn weight_t(eta: RegParams) -> f64 {
    eta.eta1 / (eta.eta1 + eta.eta2)
}

/// Minimizer of the Tikhonov functional together with its fidelity and
/// penalty values.
#[derive(Debug, Clone)]
pub struct TikhonovSolution {
    pub u: DVector<f64>,
    /// Weights the functional was minimized with (zero allowed for
    /// single-penalty runs).
    pub weights: [f64; 2],
    /// `½‖K u − g_obs‖²`
    pub phi: f64,
    pub psi: [f64; 2],
    pub iterations: usize,
    pub converged: bool,
    /// Solver-specific stationarity measure at `u`.
    pub inner_residual: f64,
    /// Objective value after each iteration, when requested.
    pub history: Vec<f64>,
}

impl TikhonovSolution {
    /// `φ + η₁ψ₁ + η₂ψ₂`
    pub fn objective(&self) -> f64 {
        self.phi + self.weights[0] * self.psi[0] + self.weights[1] * self.psi[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Principle {
    BalancedDiscrepancy,
    Balancing,
    Oracle,
}

impl Principle {
    pub fn as_str(&self) -> &'static str {
        match self {
            Principle::BalancedDiscrepancy => "balanced-discrepancy",
            Principle::Balancing => "balancing",
            Principle::Oracle => "oracle",
        }
    }
}

/// One outer iteration of a parameter-selection loop.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub iter: usize,
    pub eta: [f64; 2],
    pub phi: f64,
    pub psi: [f64; 2],
    /// `‖T(η)‖` for the discrepancy rule, relative η change for the
    /// fixed point, relative error for the oracle.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct SelectionResult {
    pub eta_star: RegParams,
    pub solution: TikhonovSolution,
    pub trace: Vec<TraceEntry>,
    pub principle: Principle,
    pub weight_t: f64,
    pub converged: bool,
}

impl SelectionResult {
    pub(crate) fn new(
        eta_star: RegParams,
        solution: TikhonovSolution,
        trace: Vec<TraceEntry>,
        principle: Principle,
        converged: bool,
    ) -> Self {
        debug_assert!(!trace.is_empty());
        Self { weight_t: weight_t(eta_star), eta_star, solution, trace, principle, converged }
    }

    /// Number of outer iterations after the initial evaluation.
    pub fn iterations(&self) -> usize {
        self.trace.last().map(|t| t.iter).unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_t_examples() {
        assert_eq!(weight_t(RegParams::new(1.0, 1.0).unwrap()), 0.5);
        assert_eq!(weight_t(RegParams::new(3.0, 1.0).unwrap()), 0.75);
        let t = weight_t(RegParams::new(5.89e-3, 9.67e-3).unwrap());
        // 5.89 / 15.56
        assert!((t - 0.3785).abs() < 1e-4, "{t}");
    }

    #[test]
    fn nonpositive_params_rejected() {
        for (a, b) in [(0.0, 1.0), (1.0, 0.0), (-1.0, 1.0), (1.0, -1e-300), (f64::NAN, 1.0)] {
            assert!(matches!(RegParams::new(a, b), Err(Error::InvalidParams(..))));
        }
        assert!(RegParams::try_from([1e-300, 1e300]).is_ok());
    }

    #[test]
    fn problem_dimension_checks() {
        let k = DMatrix::identity(3, 3);
        let g = DVector::from_vec(vec![1.0, 2.0]);
        assert!(matches!(Problem::from_data(k.clone(), g, 0.0), Err(Error::Dimension(_))));
        let g = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!(Problem::from_data(k.clone(), g.clone(), -1.0).is_err());
        let p = Problem::from_data(k, g.clone(), 0.0).unwrap();
        assert!(p.clone().with_truth(DVector::zeros(2), None).is_err());
        // delta inconsistent with g_true
        let gt = DVector::from_vec(vec![1.0, 2.0, 3.5]);
        assert!(p.clone().with_truth(DVector::zeros(3), Some(gt)).is_err());
        assert!(p.with_truth(DVector::zeros(3), Some(g)).is_ok());
    }
}
