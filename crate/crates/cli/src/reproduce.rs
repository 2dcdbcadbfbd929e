//! Experiment tables: for each noise level, the balanced discrepancy choice
//! next to grid-searched optimal parameters for the two-penalty model and
//! for each penalty alone.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mtikh::bundle::fmt_num;
use mtikh::selection::trace_csv;
use mtikh::{
    build_problem, oracle_grid, oracle_single, relative_error, select_broyden, select_fixed_point, Error, Example,
    GridSpec, Layout, OracleResult, Problem, ProblemConfig, Result, SelectionOptions, SelectionResult,
};

use crate::settings::Settings;
use crate::svg::{line_plot, Series};

/// Named experiment setups.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// H¹–TV deconvolution, five noise levels.
    Table1,
    /// Elastic net on the two-bump signal, five noise levels.
    Table2,
    /// Elastic-net deblurring of a 50×50 image from half the pixels.
    Deblur,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table1" => Ok(Preset::Table1),
            "table2" => Ok(Preset::Table2),
            "deblur" => Ok(Preset::Deblur),
            other => Err(Error::Parse(format!("unknown table `{other}` (table1, table2, deblur)"))),
        }
    }
}

const FIVE_LEVELS: [f64; 5] = [5e-2, 5e-3, 5e-4, 5e-5, 5e-6];

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub example: Example,
    pub eps_list: Vec<f64>,
    /// Noise seed, shared by all rows so that only the level changes.
    pub seed: u64,
    /// Exponent for the optional balancing-principle columns.
    pub gamma: f64,
    pub c_m: f64,
    /// Two-parameter oracle grid; its axes also serve the single-penalty
    /// searches.
    pub grid: GridSpec,
    /// Grid size (image side for the deblurring example).
    pub n: Option<usize>,
    pub out_dir: Option<PathBuf>,
    /// Also run the fixed-point balancing principle.
    pub balance: bool,
    pub plots: bool,
    pub selection: SelectionOptions,
}

impl ExperimentConfig {
    pub fn new(example: Example, eps_list: Vec<f64>) -> Self {
        Self {
            example,
            eps_list,
            seed: 1,
            gamma: 1.0,
            c_m: 1.0,
            grid: GridSpec::default(),
            n: None,
            out_dir: None,
            balance: false,
            plots: true,
            selection: SelectionOptions::default(),
        }
    }

    pub fn preset(p: Preset) -> Self {
        match p {
            Preset::Table1 => Self::new(Example::Ex41, FIVE_LEVELS.to_vec()),
            Preset::Table2 => Self::new(Example::Ex42, FIVE_LEVELS.to_vec()),
            Preset::Deblur => {
                let mut c = Self::new(Example::Ex43, vec![1e-2]);
                // Each point costs a 2500-unknown solve.
                c.grid = GridSpec::log(1e-6, 1.0, 13).expect("valid grid");
                c
            }
        }
    }

    /// Apply settings on top of the current values.
    pub fn apply(&mut self, s: &Settings) -> Result<()> {
        if let Some(e) = s.get::<Example>("example")? {
            self.example = e;
        }
        if let Some(v) = s.list("eps")? {
            self.eps_list = v;
        }
        if let Some(v) = s.get("seed")? {
            self.seed = v;
        }
        if let Some(v) = s.get("gamma")? {
            self.gamma = v;
        }
        if let Some(v) = s.get("cm")? {
            self.c_m = v;
        }
        if let Some(v) = s.raw("grid") {
            self.grid = GridSpec::parse(v)?;
        }
        if let Some(v) = s.get("n")? {
            self.n = Some(v);
        }
        if let Some(v) = s.raw("out") {
            self.out_dir = Some(PathBuf::from(v));
        }
        if let Some(v) = s.get("balance")? {
            self.balance = v;
        }
        if let Some(v) = s.get("plots")? {
            self.plots = v;
        }
        if let Some(v) = s.pair("eta0")? {
            self.selection.eta0 = Some(v);
        }
        if let Some(v) = s.get("tol")? {
            self.selection.outer_tol = Some(v);
        }
        if let Some(v) = s.get("max-iter")? {
            self.selection.outer_max_iter = Some(v);
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps_list.is_empty() {
            return Err(Error::InvalidArgument("eps list is empty".into()));
        }
        if let Some(e) = self.eps_list.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
            return Err(Error::InvalidArgument(format!("noise level {e} must be > 0")));
        }
        self.options().validate()
    }

    fn options(&self) -> SelectionOptions {
        SelectionOptions { gamma: self.gamma, c_m: self.c_m, ..self.selection.clone() }
    }

    /// Every setting with defaults resolved, as `key: value` lines.
    pub fn meta_text(&self) -> String {
        let o = self.options();
        let axis = |a: &[f64]| format!("{}:{}:{}", fmt_num(a[0]), fmt_num(a[a.len() - 1]), a.len());
        let eps: Vec<String> = self.eps_list.iter().map(|e| fmt_num(*e)).collect();
        let n = self.n.unwrap_or(self.example.default_n());
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k}: {v}");
        };
        kv("example", self.example.to_string());
        kv("eps", eps.join(","));
        kv("seed", self.seed.to_string());
        kv("n", n.to_string());
        kv("gamma", fmt_num(self.gamma));
        kv("cm", fmt_num(self.c_m));
        kv("grid_eta1", axis(&self.grid.eta1));
        kv("grid_eta2", axis(&self.grid.eta2));
        kv(
            "eta0",
            match o.eta0 {
                Some(e) => format!("{},{}", fmt_num(e.eta1()), fmt_num(e.eta2())),
                None => "auto (1e-2 times the mean square of g_obs)".into(),
            },
        );
        kv("outer_tol", fmt_num(o.outer_tol.unwrap_or(1e-6)));
        kv("outer_max_iter", o.outer_max_iter.unwrap_or(50).to_string());
        kv("fd_step", fmt_num(o.fd_step));
        kv("eta_min", fmt_num(o.eta_min));
        kv("balance", self.balance.to_string());
        kv("plots", self.plots.to_string());
        s
    }
}

/// One table row. Quantities of failed sub-runs are NaN and the failure is
/// described in `status`.
#[derive(Debug, Clone)]
pub struct TableRow {
    pub eps: f64,
    pub delta: f64,
    pub eta_bdp: [f64; 2],
    pub e_bdp: f64,
    pub iter_bdp: usize,
    pub converged_bdp: bool,
    pub eta_opt: [f64; 2],
    pub e_opt: f64,
    /// Optimal weight and error with only penalty 1, then only penalty 2.
    pub eta_single: [f64; 2],
    pub e_single: [f64; 2],
    pub eta_bal: [f64; 2],
    pub e_bal: f64,
    pub converged_bal: bool,
    pub status: Vec<String>,
    /// Full balanced discrepancy result, kept for traces and plots.
    pub bdp: Option<SelectionResult>,
}

impl TableRow {
    fn empty(eps: f64) -> Self {
        Self {
            eps,
            delta: f64::NAN,
            eta_bdp: [f64::NAN; 2],
            e_bdp: f64::NAN,
            iter_bdp: 0,
            converged_bdp: false,
            eta_opt: [f64::NAN; 2],
            e_opt: f64::NAN,
            eta_single: [f64::NAN; 2],
            e_single: [f64::NAN; 2],
            eta_bal: [f64::NAN; 2],
            e_bal: f64::NAN,
            converged_bal: false,
            status: Vec::new(),
            bdp: None,
        }
    }

    pub fn ok(&self) -> bool {
        self.status.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Report {
    pub config: ExperimentConfig,
    pub names: [&'static str; 2],
    pub rows: Vec<TableRow>,
}

impl Report {
    /// True when every sub-run of every row converged.
    pub fn all_converged(&self) -> bool {
        self.rows.iter().all(TableRow::ok)
    }

    pub fn table_csv(&self) -> String {
        let [a, b] = self.names;
        let mut s = format!(
            "eps,delta,eta1_bdp,eta2_bdp,e_bdp,iter_bdp,converged_bdp,eta1_opt,eta2_opt,e_opt,eta_{a},e_{a},eta_{b},e_{b}"
        );
        if self.config.balance {
            s.push_str(",eta1_bal,eta2_bal,e_bal,converged_bal");
        }
        s.push_str(",status\n");
        for r in &self.rows {
            let mut cells = vec![
                fmt_num(r.eps),
                fmt_num(r.delta),
                fmt_num(r.eta_bdp[0]),
                fmt_num(r.eta_bdp[1]),
                fmt_num(r.e_bdp),
                r.iter_bdp.to_string(),
                r.converged_bdp.to_string(),
                fmt_num(r.eta_opt[0]),
                fmt_num(r.eta_opt[1]),
                fmt_num(r.e_opt),
                fmt_num(r.eta_single[0]),
                fmt_num(r.e_single[0]),
                fmt_num(r.eta_single[1]),
                fmt_num(r.e_single[1]),
            ];
            if self.config.balance {
                cells.extend([
                    fmt_num(r.eta_bal[0]),
                    fmt_num(r.eta_bal[1]),
                    fmt_num(r.e_bal),
                    r.converged_bal.to_string(),
                ]);
            }
            cells.push(if r.ok() { "ok".into() } else { r.status.join("; ").replace(',', ";") });
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

fn row_problem(cfg: &ExperimentConfig, eps: f64) -> Result<Problem> {
    build_problem(&ProblemConfig { example: cfg.example, n: cfg.n, eps, seed: cfg.seed, subsample: None })
}

fn run_row(cfg: &ExperimentConfig, eps: f64) -> (TableRow, Option<Problem>) {
    let mut row = TableRow::empty(eps);
    let problem = match row_problem(cfg, eps) {
        Ok(p) => p,
        Err(e) => {
            row.status.push(format!("problem: {e}"));
            return (row, None);
        }
    };
    row.delta = problem.delta();
    let model = cfg.example.model(&problem);
    let u_true = problem.u_true().expect("built-in problems carry the truth");
    let opts = cfg.options();

    match select_broyden(&problem, &model, problem.delta(), &opts) {
        Ok(r) => {
            row.eta_bdp = r.eta_star.as_array();
            row.e_bdp = relative_error(&r.solution.u, u_true).unwrap_or(f64::NAN);
            row.iter_bdp = r.iterations();
            row.converged_bdp = r.converged;
            if !r.converged {
                row.status.push("bdp: not converged".into());
            }
            row.bdp = Some(r);
        }
        Err(e) => row.status.push(format!("bdp: {e}")),
    }

    let note = |row: &mut TableRow, what: &str, r: &Result<OracleResult>| match r {
        Ok(o) if o.failures > 0 => row.status.push(format!("{what}: {} grid points failed", o.failures)),
        Ok(_) => {}
        Err(e) => row.status.push(format!("{what}: {e}")),
    };
    let two = oracle_grid(&problem, &model, &cfg.grid, &opts.solver);
    if let Ok(o) = &two {
        row.eta_opt = o.weights;
        row.e_opt = o.error;
    }
    note(&mut row, "opt", &two);
    for (i, axis) in [&cfg.grid.eta1, &cfg.grid.eta2].into_iter().enumerate() {
        let one = oracle_single(&problem, &model, i, axis, &opts.solver);
        if let Ok(o) = &one {
            row.eta_single[i] = o.weights[i];
            row.e_single[i] = o.error;
        }
        note(&mut row, model.short_names()[i], &one);
    }

    if cfg.balance {
        match select_fixed_point(&problem, &model, cfg.gamma, &opts) {
            Ok(r) => {
                row.eta_bal = r.eta_star.as_array();
                row.e_bal = relative_error(&r.solution.u, u_true).unwrap_or(f64::NAN);
                row.converged_bal = r.converged;
                if !r.converged {
                    row.status.push("balance: not converged".into());
                }
            }
            Err(e) => row.status.push(format!("balance: {e}")),
        }
    }
    (row, Some(problem))
}

/// Run every row and, when `out_dir` is set, write `meta.txt`,
/// `table.csv`, `traces/` and `plots/` there.
pub fn reproduce(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    // Model names only depend on the example.
    let names = {
        let p = row_problem(cfg, cfg.eps_list[0])?;
        cfg.example.model(&p).short_names()
    };
    if let Some(dir) = &cfg.out_dir {
        fs::create_dir_all(dir.join("traces"))?;
        if cfg.plots {
            fs::create_dir_all(dir.join("plots"))?;
        }
        fs::write(dir.join("meta.txt"), cfg.meta_text())?;
    }
    let mut rows = Vec::with_capacity(cfg.eps_list.len());
    for &eps in &cfg.eps_list {
        let (row, problem) = run_row(cfg, eps);
        if let (Some(dir), Some(problem)) = (&cfg.out_dir, &problem) {
            write_row_files(cfg, dir, &row, problem)?;
        }
        rows.push(row);
    }
    let report = Report { config: cfg.clone(), names, rows };
    if let Some(dir) = &cfg.out_dir {
        fs::write(dir.join("table.csv"), report.table_csv())?;
    }
    Ok(report)
}

fn write_row_files(cfg: &ExperimentConfig, dir: &Path, row: &TableRow, problem: &Problem) -> Result<()> {
    let Some(r) = &row.bdp else {
        return Ok(());
    };
    let tag = format!("eps{:e}", row.eps);
    fs::write(dir.join("traces").join(format!("bdp_{tag}.csv")), trace_csv(&r.trace))?;
    if cfg.plots {
        let u_true = problem.u_true().expect("built-in problems carry the truth");
        let (truth, est, what) = match problem.layout() {
            Layout::Signal(_) => (u_true.as_slice().to_vec(), r.solution.u.as_slice().to_vec(), String::new()),
            Layout::Image { rows, cols } => {
                let mid = rows / 2;
                let take = |v: &[f64]| v[mid * cols..(mid + 1) * cols].to_vec();
                (take(u_true.as_slice()), take(r.solution.u.as_slice()), format!(", row {mid}"))
            }
        };
        let title = format!(
            "{} eps={:e}{what}: eta=({:.3e}, {:.3e}), e={:.3e}",
            cfg.example, row.eps, row.eta_bdp[0], row.eta_bdp[1], row.e_bdp
        );
        let svg = line_plot(
            &title,
            &[
                Series { label: "u_true", color: "black", values: &truth },
                Series { label: "u_bdp", color: "#c0392b", values: &est },
            ],
        );
        fs::write(dir.join("plots").join(format!("u_{tag}.svg")), svg)?;
    }
    Ok(())
}
