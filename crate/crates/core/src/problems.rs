//! Test problems: kernel discretization, exact solutions and synthetic noise.
//!
//! Noise is drawn from `ChaCha8Rng::seed_from_u64(seed)` through
//! `rand_distr::StandardNormal`, one sample per data entry in index order.
//! The mapping seed → noise vector is therefore fixed across platforms.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::penalties::PenaltyModel;
use crate::types::{Grid, Layout, Problem, Provenance};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelId {
    /// `ξ(s − t)` with `ξ(τ) = 1 + cos(πτ/3)` on `|τ| ≤ 3`.
    H1TvConvolution,
    /// `¼ (1/16 + (s − t)²)^{−3/2}`.
    BumpKernel,
    /// Separable Gaussian blur followed by row subsampling.
    GaussianBlur,
}

impl FromStr for KernelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "h1tv-convolution" => Ok(KernelId::H1TvConvolution),
            "bump-kernel" => Ok(KernelId::BumpKernel),
            "gaussian-blur" => Ok(KernelId::GaussianBlur),
            other => Err(Error::UnknownKernel(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub id: KernelId,
    /// Integration interval (1-D kernels).
    pub interval: (f64, f64),
    /// Grid size; the image side length for the blur.
    pub n: usize,
    pub blur_sigma: f64,
    pub blur_width: usize,
    /// Fraction of data rows retained by the blur operator.
    pub subsample: f64,
}

impl KernelSpec {
    pub fn h1tv_convolution(n: usize) -> Self {
        Self { id: KernelId::H1TvConvolution, interval: (-6.0, 6.0), ..Self::base(n) }
    }

    pub fn bump_kernel(n: usize) -> Self {
        Self { id: KernelId::BumpKernel, interval: (0.0, 1.0), ..Self::base(n) }
    }

    pub fn gaussian_blur(side: usize, subsample: f64) -> Self {
        Self { id: KernelId::GaussianBlur, interval: (0.0, side as f64), subsample, ..Self::base(side) }
    }

    fn base(n: usize) -> Self {
        Self {
            id: KernelId::BumpKernel,
            interval: (0.0, 1.0),
            n,
            blur_sigma: 1.0,
            blur_width: 5,
            subsample: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidArgument(format!("grid size {} < 2", self.n)));
        }
        if self.id == KernelId::GaussianBlur {
            if self.blur_width % 2 == 0 {
                return Err(Error::InvalidArgument(format!(
                    "blur width {} must be odd",
                    self.blur_width
                )));
            }
            if !(self.subsample > 0.0 && self.subsample <= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "subsample fraction {} outside (0, 1]",
                    self.subsample
                )));
            }
            if !(self.blur_sigma > 0.0) {
                return Err(Error::InvalidArgument("blur sigma must be positive".into()));
            }
        } else if !(self.interval.1 > self.interval.0) {
            return Err(Error::InvalidArgument("empty integration interval".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Grid {
        match self.id {
            KernelId::GaussianBlur => Grid::unit(self.n),
            _ => Grid::uniform(self.interval.0, self.interval.1, self.n),
        }
    }

    pub fn layout(&self) -> Layout {
        match self.id {
            KernelId::GaussianBlur => Layout::Image { rows: self.n, cols: self.n },
            _ => Layout::Signal(self.n),
        }
    }
}

fn xi(tau: f64) -> f64 {
    if tau.abs() <= 3.0 {
        1.0 + (PI * tau / 3.0).cos()
    } else {
        0.0
    }
}

fn bump(tau: f64) -> f64 {
    0.25 * (1.0 / 16.0 + tau * tau).powf(-1.5)
}

/// Discretize the integral operator of `spec`.
///
/// 1-D kernels use midpoint quadrature on `t_j = a + (j − ½)h` with
/// collocation at the same points: `K_ij = h·k(t_i, t_j)`.
pub fn discretize_kernel(spec: &KernelSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    match spec.id {
        KernelId::H1TvConvolution | KernelId::BumpKernel => {
            let grid = spec.grid();
            let t = grid.midpoints(spec.n);
            let k: fn(f64) -> f64 = if spec.id == KernelId::BumpKernel { bump } else { xi };
            Ok(DMatrix::from_fn(spec.n, spec.n, |i, j| grid.h * k(t[i] - t[j])))
        }
        KernelId::GaussianBlur => {
            let blur = blur_matrix(spec.n, spec.blur_sigma, spec.blur_width);
            let keep = subsample_mask(spec.n * spec.n, spec.subsample);
            Ok(blur.select_rows(&keep))
        }
    }
}

/// Normalized Gaussian taps `k = −w/2 ..= w/2`.
pub fn gaussian_taps(sigma: f64, width: usize) -> Vec<f64> {
    let half = (width / 2) as isize;
    let raw: Vec<f64> = (-half..=half)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Separable blur on a `side × side` image with replicate boundary.
fn blur_matrix(side: usize, sigma: f64, width: usize) -> DMatrix<f64> {
    let taps = gaussian_taps(sigma, width);
    let half = (width / 2) as isize;
    let mut b1 = DMatrix::<f64>::zeros(side, side);
    for i in 0..side {
        for (t, w) in taps.iter().enumerate() {
            let j = (i as isize + t as isize - half).clamp(0, side as isize - 1) as usize;
            b1[(i, j)] += w;
        }
    }
    let np = side * side;
    let mut b = DMatrix::zeros(np, np);
    for r in 0..side {
        for c in 0..side {
            let row = r * side + c;
            for r2 in 0..side {
                let wr = b1[(r, r2)];
                if wr == 0.0 {
                    continue;
                }
                for c2 in 0..side {
                    let wc = b1[(c, c2)];
                    if wc != 0.0 {
                        b[(row, r2 * side + c2)] = wr * wc;
                    }
                }
            }
        }
    }
    b
}

/// Row indices retained when keeping a fraction `frac` of `total` entries,
/// spread evenly in row-major order (every other pixel for `frac = ½`).
pub fn subsample_mask(total: usize, frac: f64) -> Vec<usize> {
    (0..total)
        .filter(|&i| ((i + 1) as f64 * frac).floor() > (i as f64 * frac).floor())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Example {
    /// H¹–TV deconvolution on `[−6, 6]`.
    Ex41,
    /// Elastic-net recovery of two bumps on `[0, 1]`.
    Ex42,
    /// Elastic-net deblurring of a 2-D image with half the data.
    Ex43,
}

impl Example {
    pub fn as_str(&self) -> &'static str {
        match self {
            Example::Ex41 => "ex41",
            Example::Ex42 => "ex42",
            Example::Ex43 => "ex43",
        }
    }

    pub fn default_n(&self) -> usize {
        match self {
            Example::Ex41 | Example::Ex42 => 100,
            Example::Ex43 => 50,
        }
    }

    /// The two-penalty model the example is solved with.
    pub fn model(&self, problem: &Problem) -> PenaltyModel {
        match self {
            Example::Ex41 => PenaltyModel::h1_tv(problem.grid().h, problem.layout()),
            Example::Ex42 | Example::Ex43 => PenaltyModel::elastic_net(problem.layout()),
        }
    }
}

impl fmt::Display for Example {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Example {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ex41" | "4.1" => Ok(Example::Ex41),
            "ex42" | "4.2" => Ok(Example::Ex42),
            "ex43" | "4.3" => Ok(Example::Ex43),
            other => Err(Error::Parse(format!("unknown example `{other}`"))),
        }
    }
}

/// Flat plateau on `[−4, −1]` and a smooth `sin²` bump on `[1, 5]`.
pub fn phantom_ex41(t: f64) -> f64 {
    if (-4.0..=-1.0).contains(&t) {
        1.0
    } else if (1.0..=5.0).contains(&t) {
        (PI * (t - 1.0) / 4.0).sin().powi(2)
    } else {
        0.0
    }
}

/// Two Gaussian bumps centred at 0.3 and 0.7.
pub fn phantom_ex42(t: f64) -> f64 {
    let w = 2.0 * 0.03 * 0.03;
    (-(t - 0.3).powi(2) / w).exp() + 0.8 * (-(t - 0.7).powi(2) / w).exp()
}

/// Two blocks and a plus-shaped cross of unit intensity on a zero image.
/// Coordinates are laid out for a 50×50 image and scaled to `side`.
pub fn phantom_ex43(side: usize) -> DVector<f64> {
    // (row0, row1, col0, col1) in 50-pixel units, half-open
    const RECTS: [(usize, usize, usize, usize); 4] = [
        (6, 16, 6, 20),
        (32, 44, 5, 15),
        (15, 37, 33, 37),
        (24, 28, 24, 46),
    ];
    let scale = |x: usize| (x * side + 25) / 50;
    let mut img = DVector::zeros(side * side);
    for (r0, r1, c0, c1) in RECTS {
        for r in scale(r0)..scale(r1).min(side) {
            for c in scale(c0)..scale(c1).min(side) {
                img[r * side + c] = 1.0;
            }
        }
    }
    img
}

/// `g_obs_i = g_true_i + max|g_true|·eps·ζ_i` with seeded standard normal ζ.
/// Returns the noisy data and the realized noise norm.
pub fn add_noise(g_true: &DVector<f64>, eps: f64, seed: u64) -> Result<(DVector<f64>, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zeta = DVector::from_fn(g_true.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    add_noise_with(g_true, eps, &zeta)
}

/// As [`add_noise`] with a caller-supplied noise vector.
pub fn add_noise_with(
    g_true: &DVector<f64>,
    eps: f64,
    zeta: &DVector<f64>,
) -> Result<(DVector<f64>, f64)> {
    if !(eps >= 0.0) {
        return Err(Error::InvalidArgument(format!("relative noise level {eps} < 0")));
    }
    if zeta.len() != g_true.len() {
        return Err(Error::Dimension("noise vector length".into()));
    }
    if eps == 0.0 {
        return Ok((g_true.clone(), 0.0));
    }
    let scale = g_true.amax() * eps;
    let g_obs = g_true + zeta * scale;
    let delta = (&g_obs - g_true).norm();
    Ok((g_obs, delta))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConfig {
    pub example: Example,
    /// Grid size (image side for `Ex43`); `None` picks the default.
    pub n: Option<usize>,
    pub eps: f64,
    pub seed: u64,
    /// Retained data fraction for `Ex43`; defaults to ½.
    pub subsample: Option<f64>,
}

impl ProblemConfig {
    pub fn new(example: Example, eps: f64, seed: u64) -> Self {
        Self { example, n: None, eps, seed, subsample: None }
    }

    pub fn kernel_spec(&self) -> KernelSpec {
        let n = self.n.unwrap_or(self.example.default_n());
        match self.example {
            Example::Ex41 => KernelSpec::h1tv_convolution(n),
            Example::Ex42 => KernelSpec::bump_kernel(n),
            Example::Ex43 => KernelSpec::gaussian_blur(n, self.subsample.unwrap_or(0.5)),
        }
    }
}

/// Build one of the built-in test problems.
pub fn make_test_problem(example: Example, n: Option<usize>, eps: f64, seed: u64) -> Result<Problem> {
    build_problem(&ProblemConfig { example, n, eps, seed, subsample: None })
}

pub fn build_problem(cfg: &ProblemConfig) -> Result<Problem> {
    if !(cfg.eps >= 0.0) {
        return Err(Error::InvalidArgument(format!("relative noise level {} < 0", cfg.eps)));
    }
    let spec = cfg.kernel_spec();
    let k = discretize_kernel(&spec)?;
    let grid = spec.grid();
    let u_true = match cfg.example {
        Example::Ex41 => DVector::from_vec(grid.midpoints(spec.n).into_iter().map(phantom_ex41).collect()),
        Example::Ex42 => DVector::from_vec(grid.midpoints(spec.n).into_iter().map(phantom_ex42).collect()),
        Example::Ex43 => phantom_ex43(spec.n),
    };
    let g_true = &k * &u_true;
    let (g_obs, delta) = add_noise(&g_true, cfg.eps, cfg.seed)?;
    Ok(Problem::new(k, g_obs, delta, grid, spec.layout())?
        .with_truth(u_true, Some(g_true))?
        .with_provenance(Provenance {
            example: cfg.example.as_str().to_string(),
            eps: cfg.eps,
            seed: cfg.seed,
        }))
}
