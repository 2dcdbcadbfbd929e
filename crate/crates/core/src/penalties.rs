//! Penalty functionals and the discrete gradient they are built on.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::types::Layout;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltyKind {
    /// `½‖u‖²`
    SqL2,
    /// `Σ ((u_{i+1} − u_i)/h)² h`
    SqH1,
    /// `Σ |u_{i+1} − u_i|`
    Tv,
    /// `Σ |u_i|`
    L1,
}

impl PenaltyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PenaltyKind::SqL2 => "sq-l2",
            PenaltyKind::SqH1 => "sq-h1",
            PenaltyKind::Tv => "tv",
            PenaltyKind::L1 => "l1",
        }
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self, PenaltyKind::SqL2 | PenaltyKind::SqH1)
    }

    /// Degree of absolute homogeneity.
    pub fn degree(&self) -> i32 {
        if self.is_quadratic() {
            2
        } else {
            1
        }
    }
}

impl FromStr for PenaltyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sq-l2" => Ok(PenaltyKind::SqL2),
            "sq-h1" => Ok(PenaltyKind::SqH1),
            "tv" => Ok(PenaltyKind::Tv),
            "l1" => Ok(PenaltyKind::L1),
            other => Err(Error::Parse(format!("unknown penalty kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Penalty {
    pub kind: PenaltyKind,
    /// Grid spacing, used by `SqH1` only.
    pub grid_h: f64,
    pub layout: Layout,
    /// Isotropic 2-D total variation instead of the anisotropic default.
    pub isotropic: bool,
}

impl Penalty {
    pub fn new(kind: PenaltyKind, grid_h: f64, layout: Layout) -> Self {
        Self { kind, grid_h, layout, isotropic: false }
    }

    pub fn isotropic(mut self, on: bool) -> Self {
        self.isotropic = on;
        self
    }

    /// Evaluate without input validation.
    pub fn value(&self, u: &DVector<f64>) -> f64 {
        match self.kind {
            PenaltyKind::SqL2 => 0.5 * u.norm_squared(),
            PenaltyKind::L1 => u.lp_norm(1),
            PenaltyKind::SqH1 => grad(u, self.layout).norm_squared() / self.grid_h,
            PenaltyKind::Tv => tv_of_gradient(&grad(u, self.layout), self.layout, self.isotropic),
        }
    }

    /// `LᵀL` for quadratic kinds, so that `ψ(u) = ½ uᵀ(LᵀL)u`.
    pub fn quadratic_gram(&self) -> Option<DMatrix<f64>> {
        let n = self.layout.len();
        match self.kind {
            PenaltyKind::SqL2 => Some(DMatrix::identity(n, n)),
            PenaltyKind::SqH1 => Some(dtd(self.layout) * (2.0 / self.grid_h)),
            _ => None,
        }
    }
}

/// `ψ(u)` for the given penalty; rejects non-finite input.
pub fn eval_penalty(p: &Penalty, u: &DVector<f64>) -> Result<f64> {
    if u.len() != p.layout.len() {
        return Err(Error::Dimension(format!(
            "vector of length {} for a penalty on {} unknowns",
            u.len(),
            p.layout.len()
        )));
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("penalty argument"));
    }
    Ok(p.value(u))
}

/// Componentwise `sign(v)·max(|v| − τ, 0)`.
pub fn soft_threshold(v: &DVector<f64>, tau: f64) -> DVector<f64> {
    v.map(|x| soft(x, tau))
}

#[inline]
pub(crate) fn soft(x: f64, tau: f64) -> f64 {
    if x > tau {
        x - tau
    } else if x < -tau {
        x + tau
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelId {
    H1Tv,
    ElasticNet,
    QuadQuad,
}

impl ModelId {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelId::H1Tv => "h1-tv",
            ModelId::ElasticNet => "elastic-net",
            ModelId::QuadQuad => "quad-quad",
        }
    }
}

/// Pair of penalties `(ψ₁, ψ₂)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyModel {
    psi: [Penalty; 2],
    id: ModelId,
}

impl PenaltyModel {
    /// `ψ₁ = |u|²_{H¹}`, `ψ₂ = |u|_TV`.
    pub fn h1_tv(grid_h: f64, layout: Layout) -> Self {
        Self {
            psi: [
                Penalty::new(PenaltyKind::SqH1, grid_h, layout),
                Penalty::new(PenaltyKind::Tv, grid_h, layout),
            ],
            id: ModelId::H1Tv,
        }
    }

    /// `ψ₁ = ‖u‖₁`, `ψ₂ = ½‖u‖²`.
    pub fn elastic_net(layout: Layout) -> Self {
        Self {
            psi: [
                Penalty::new(PenaltyKind::L1, 1.0, layout),
                Penalty::new(PenaltyKind::SqL2, 1.0, layout),
            ],
            id: ModelId::ElasticNet,
        }
    }

    /// Two quadratic penalties.
    pub fn quad_quad(p1: Penalty, p2: Penalty) -> Result<Self> {
        if !p1.kind.is_quadratic() || !p2.kind.is_quadratic() {
            return Err(Error::InvalidArgument(
                "quad-quad model needs two quadratic penalties".into(),
            ));
        }
        if p1.layout != p2.layout {
            return Err(Error::InvalidArgument("penalties on different layouts".into()));
        }
        Ok(Self { psi: [p1, p2], id: ModelId::QuadQuad })
    }

    /// Build a model from its textual id: `h1-tv`, `elastic-net`,
    /// `quad-quad` (sq-l2 + sq-h1) or `quad-quad:<kind>,<kind>`.
    pub fn parse(spec: &str, grid_h: f64, layout: Layout) -> Result<Self> {
        let (id, rest) = match spec.split_once(':') {
            Some((a, b)) => (a, Some(b)),
            None => (spec, None),
        };
        match (id, rest) {
            ("h1-tv", None) => Ok(Self::h1_tv(grid_h, layout)),
            ("elastic-net", None) => Ok(Self::elastic_net(layout)),
            ("quad-quad", None) => Self::quad_quad(
                Penalty::new(PenaltyKind::SqL2, grid_h, layout),
                Penalty::new(PenaltyKind::SqH1, grid_h, layout),
            ),
            ("quad-quad", Some(kinds)) => {
                let ks: Vec<&str> = kinds.split(',').map(str::trim).collect();
                if ks.len() != 2 {
                    return Err(Error::Parse(format!("expected two penalty kinds in `{spec}`")));
                }
                Self::quad_quad(
                    Penalty::new(ks[0].parse()?, grid_h, layout),
                    Penalty::new(ks[1].parse()?, grid_h, layout),
                )
            }
            _ => Err(Error::Parse(format!("unknown penalty model `{spec}`"))),
        }
    }

    pub fn id(&self) -> ModelId {
        self.id
    }

    pub fn penalty(&self, i: usize) -> &Penalty {
        &self.psi[i]
    }

    pub fn penalties(&self) -> &[Penalty; 2] {
        &self.psi
    }

    pub fn layout(&self) -> Layout {
        self.psi[0].layout
    }

    /// `(ψ₁(u), ψ₂(u))`
    pub fn eval(&self, u: &DVector<f64>) -> [f64; 2] {
        [self.psi[0].value(u), self.psi[1].value(u)]
    }

    /// Short names of the two penalties used in table headers.
    pub fn short_names(&self) -> [&'static str; 2] {
        match self.id {
            ModelId::H1Tv => ["h1", "tv"],
            ModelId::ElasticNet => ["l1", "l2"],
            ModelId::QuadQuad => [self.psi[0].kind.as_str(), self.psi[1].kind.as_str()],
        }
    }
}

impl fmt::Display for PenaltyModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.id {
            ModelId::QuadQuad => write!(
                f,
                "quad-quad:{},{}",
                self.psi[0].kind.as_str(),
                self.psi[1].kind.as_str()
            ),
            id => f.write_str(id.as_str()),
        }
    }
}

// Discrete gradient -------------------------------------------------------
//
// 1-D: forward differences `(Du)_i = u_{i+1} − u_i`, i = 0..n−2.
// 2-D (row-major image): `2·rows·cols` entries, horizontal differences first,
// then vertical ones; the last column/row carries a zero difference
// (replicate boundary).

/// Number of entries in `D u`.
pub fn grad_len(layout: Layout) -> usize {
    match layout {
        Layout::Signal(n) => n.saturating_sub(1),
        Layout::Image { rows, cols } => 2 * rows * cols,
    }
}

pub fn grad(u: &DVector<f64>, layout: Layout) -> DVector<f64> {
    match layout {
        Layout::Signal(n) => DVector::from_fn(n.saturating_sub(1), |i, _| u[i + 1] - u[i]),
        Layout::Image { rows, cols } => {
            let np = rows * cols;
            let mut out = DVector::zeros(2 * np);
            for r in 0..rows {
                for c in 0..cols {
                    let p = r * cols + c;
                    if c + 1 < cols {
                        out[p] = u[p + 1] - u[p];
                    }
                    if r + 1 < rows {
                        out[np + p] = u[p + cols] - u[p];
                    }
                }
            }
            out
        }
    }
}

/// `Dᵀ q`
pub fn grad_adjoint(q: &DVector<f64>, layout: Layout) -> DVector<f64> {
    match layout {
        Layout::Signal(n) => {
            let mut out = DVector::zeros(n);
            for i in 0..n.saturating_sub(1) {
                out[i] -= q[i];
                out[i + 1] += q[i];
            }
            out
        }
        Layout::Image { rows, cols } => {
            let np = rows * cols;
            let mut out = DVector::zeros(np);
            for r in 0..rows {
                for c in 0..cols {
                    let p = r * cols + c;
                    if c + 1 < cols {
                        out[p] -= q[p];
                        out[p + 1] += q[p];
                    }
                    if r + 1 < rows {
                        out[p] -= q[np + p];
                        out[p + cols] += q[np + p];
                    }
                }
            }
            out
        }
    }
}

/// Dense `D`.
pub fn grad_matrix(layout: Layout) -> DMatrix<f64> {
    let n = layout.len();
    let p = grad_len(layout);
    let mut d = DMatrix::zeros(p, n);
    let mut e = DVector::zeros(n);
    for j in 0..n {
        e[j] = 1.0;
        d.set_column(j, &grad(&e, layout));
        e[j] = 0.0;
    }
    d
}

/// Dense `DᵀD`.
pub fn dtd(layout: Layout) -> DMatrix<f64> {
    match layout {
        Layout::Signal(n) => {
            let mut m = DMatrix::zeros(n, n);
            for i in 0..n.saturating_sub(1) {
                m[(i, i)] += 1.0;
                m[(i + 1, i + 1)] += 1.0;
                m[(i, i + 1)] -= 1.0;
                m[(i + 1, i)] -= 1.0;
            }
            m
        }
        Layout::Image { .. } => {
            let d = grad_matrix(layout);
            d.tr_mul(&d)
        }
    }
}

pub(crate) fn tv_of_gradient(du: &DVector<f64>, layout: Layout, isotropic: bool) -> f64 {
    match (layout, isotropic) {
        (Layout::Image { rows, cols }, true) => {
            let np = rows * cols;
            (0..np).map(|p| du[p].hypot(du[np + p])).sum()
        }
        _ => du.lp_norm(1),
    }
}
