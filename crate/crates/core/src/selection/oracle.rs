//! Grid search for the parameter with the smallest error against the known
//! solution. Only usable on synthetic problems.

use rayon::prelude::*;

use super::relative_error;
use crate::error::{Error, Result};
use crate::penalties::PenaltyModel;
use crate::solvers::{solve_weighted, SolverOptions};
use crate::types::{Problem, RegParams, TikhonovSolution};

/// Candidate values for each parameter, ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub eta1: Vec<f64>,
    pub eta2: Vec<f64>,
}

impl GridSpec {
    /// `n × n` log-spaced grid over `[lo, hi]²`.
    pub fn log(lo: f64, hi: f64, n: usize) -> Result<Self> {
        let axis = log_axis(lo, hi, n)?;
        Ok(Self { eta1: axis.clone(), eta2: axis })
    }

    pub fn new(mut eta1: Vec<f64>, mut eta2: Vec<f64>) -> Result<Self> {
        for v in eta1.iter().chain(&eta2) {
            if !(*v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("grid value {v} must be positive")));
            }
        }
        if eta1.is_empty() || eta2.is_empty() {
            return Err(Error::InvalidArgument("empty grid axis".into()));
        }
        eta1.sort_by(f64::total_cmp);
        eta2.sort_by(f64::total_cmp);
        Ok(Self { eta1, eta2 })
    }

    /// Parse `lo:hi:n`, e.g. `1e-10:1:25`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::Parse(format!("grid `{s}` is not lo:hi:n"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
        Self::log(lo, hi, n)
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::log(1e-10, 1.0, 25).expect("valid default grid")
    }
}

pub(crate) fn log_axis(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) || n == 0 || (n == 1 && hi != lo) {
        return Err(Error::InvalidArgument(format!("log grid [{lo}, {hi}] with {n} points")));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.log10(), hi.log10());
    Ok((0..n)
        .map(|i| {
            if i == 0 {
                lo
            } else if i == n - 1 {
                hi
            } else {
                10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64)
            }
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    /// Best weights; one entry is zero for single-penalty searches.
    pub weights: [f64; 2],
    pub error: f64,
    pub solution: TikhonovSolution,
    /// Grid points where the solver failed.
    pub failures: usize,
}

impl OracleResult {
    /// Best parameter pair for two-parameter searches.
    pub fn eta(&self) -> Result<RegParams> {
        RegParams::try_from(self.weights)
    }
}

fn search(problem: &Problem, model: &PenaltyModel, points: Vec<[f64; 2]>, opts: &SolverOptions) -> Result<OracleResult> {
    let u_true = problem.u_true().ok_or(Error::MissingTruth)?;
    if u_true.norm() == 0.0 {
        return Err(Error::ZeroTruth);
    }
    let evaluated: Vec<Option<(f64, TikhonovSolution)>> = points
        .par_iter()
        .map(|w| {
            let sol = solve_weighted(problem, model, *w, opts, None).ok()?;
            let e = relative_error(&sol.u, u_true).ok()?;
            e.is_finite().then_some((e, sol))
        })
        .collect();
    let failures = evaluated.iter().filter(|e| e.is_none()).count();
    // Points are ordered by η₁ then η₂, so keeping the first strict minimum
    // breaks ties toward the smaller parameters.
    let mut best: Option<(f64, TikhonovSolution)> = None;
    for (e, sol) in evaluated.into_iter().flatten() {
        if best.as_ref().is_none_or(|(b, _)| e < *b) {
            best = Some((e, sol));
        }
    }
    let (error, solution) = best.ok_or(Error::Singular)?;
    Ok(OracleResult { weights: solution.weights, error, solution, failures })
}

/// Smallest relative error over `grid` for the two-penalty model.
pub fn oracle_grid(problem: &Problem, model: &PenaltyModel, grid: &GridSpec, opts: &SolverOptions) -> Result<OracleResult> {
    let points = grid.eta1.iter().flat_map(|&a| grid.eta2.iter().map(move |&b| [a, b])).collect();
    search(problem, model, points, opts)
}

/// Smallest relative error with only penalty `index` (0 or 1) switched on.
pub fn oracle_single(
    problem: &Problem,
    model: &PenaltyModel,
    index: usize,
    axis: &[f64],
    opts: &SolverOptions,
) -> Result<OracleResult> {
    if index > 1 {
        return Err(Error::InvalidArgument(format!("penalty index {index}")));
    }
    let mut axis = axis.to_vec();
    axis.sort_by(f64::total_cmp);
    let points = axis
        .iter()
        .map(|&v| if index == 0 { [v, 0.0] } else { [0.0, v] })
        .collect();
    search(problem, model, points, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::penalties::{Penalty, PenaltyKind};
    use crate::types::Layout;
    use nalgebra::{DMatrix, DVector};

    // K = I, g = 1 + noise, u_true = 1: u = g/(1 + η₁ + η₂) and the error
    // |g/(1+s) − 1| vanishes at s = g − 1.
    fn scalar_with_truth(g: f64) -> (Problem, PenaltyModel) {
        let p = Problem::from_data(DMatrix::identity(1, 1), DVector::from_element(1, g), 0.0)
            .unwrap()
            .with_truth(DVector::from_element(1, 1.0), None)
            .unwrap();
        let l2 = Penalty::new(PenaltyKind::SqL2, 1.0, Layout::Signal(1));
        (p, PenaltyModel::quad_quad(l2, l2).unwrap())
    }

    #[test]
    fn log_axis_endpoints() {
        let a = log_axis(1e-10, 1.0, 25).unwrap();
        assert_eq!(a.len(), 25);
        assert_eq!(a[0], 1e-10);
        assert_eq!(a[24], 1.0);
        assert!(a.windows(2).all(|w| w[1] > w[0]));
        assert!(log_axis(1.0, 0.1, 3).is_err());
        assert_eq!(GridSpec::parse("1e-4:1e-2:3").unwrap().eta1.len(), 3);
        assert!(GridSpec::parse("1e-4:1e-2").is_err());
    }

    #[test]
    fn finds_scalar_optimum_within_a_cell() {
        let (p, m) = scalar_with_truth(1.3);
        let grid = GridSpec::log(1e-3, 1.0, 31).unwrap();
        let r = oracle_grid(&p, &m, &grid, &SolverOptions::default()).unwrap();
        let s = r.weights[0] + r.weights[1];
        let ratio = grid.eta1[1] / grid.eta1[0];
        // Optimal total weight is 0.3.
        assert!(s / 0.3 < ratio * ratio && 0.3 / s < ratio * ratio, "{s}");
    }

    #[test]
    fn single_point_grid() {
        let (p, m) = scalar_with_truth(1.3);
        let grid = GridSpec::new(vec![0.02], vec![0.7]).unwrap();
        let r = oracle_grid(&p, &m, &grid, &SolverOptions::default()).unwrap();
        assert_eq!(r.weights, [0.02, 0.7]);
    }

    #[test]
    fn ties_prefer_small_parameters() {
        // Error depends on η₁ + η₂ only; (0.1, 0.2) and (0.2, 0.1) tie.
        let (p, m) = scalar_with_truth(1.3);
        let grid = GridSpec::new(vec![0.1, 0.2], vec![0.1, 0.2]).unwrap();
        let r = oracle_grid(&p, &m, &grid, &SolverOptions::default()).unwrap();
        assert_eq!(r.weights, [0.1, 0.2]);
    }

    #[test]
    fn finer_nested_grid_never_worse() {
        let (p, m) = scalar_with_truth(1.77);
        let coarse = GridSpec::log(1e-4, 1.0, 5).unwrap();
        let fine = GridSpec::log(1e-4, 1.0, 9).unwrap();
        let a = oracle_grid(&p, &m, &coarse, &SolverOptions::default()).unwrap();
        let b = oracle_grid(&p, &m, &fine, &SolverOptions::default()).unwrap();
        assert!(b.error <= a.error);
    }

    #[test]
    fn truth_required() {
        let p = Problem::from_data(DMatrix::identity(1, 1), DVector::from_element(1, 1.0), 0.0).unwrap();
        let l2 = Penalty::new(PenaltyKind::SqL2, 1.0, Layout::Signal(1));
        let m = PenaltyModel::quad_quad(l2, l2).unwrap();
        assert!(matches!(
            oracle_grid(&p, &m, &GridSpec::default(), &SolverOptions::default()),
            Err(Error::MissingTruth)
        ));
    }
}
