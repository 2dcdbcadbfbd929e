use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mtikh::bundle::{fmt_num, read_bundle, write_bundle, write_vector};
use mtikh::selection::write_trace_csv;
use mtikh::{
    build_problem, oracle_grid, relative_error, select_broyden, select_fixed_point, solve_tikhonov, Error, Example,
    GridSpec, PenaltyModel, Problem, ProblemConfig, Result, SelectionOptions, SolverOptions, TikhonovSolution,
};
use mtikh_cli::{reproduce, ExperimentConfig, Preset, Settings};

#[derive(Parser)]
#[command(name = "mtikh", version, about = "Two-parameter Tikhonov regularization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a test problem and write it as a bundle directory.
    MakeProblem(MakeProblem),
    /// Solve the regularized problem at a fixed parameter pair.
    Solve(Solve),
    /// Choose the parameter pair.
    Select(Select),
    /// Run an experiment table.
    Reproduce(Reproduce),
}

#[derive(Args)]
struct Common {
    /// `key = value` file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn settings(&self) -> Result<Settings> {
        let mut s = match &self.config {
            Some(p) => Settings::from_file(p)?,
            None => Settings::default(),
        };
        s.set_opt("out", self.out.as_ref().map(|p| p.display().to_string()));
        Ok(s)
    }
}

#[derive(Args)]
struct MakeProblem {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    example: Option<String>,
    /// Relative noise level.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Grid size (image side for ex43).
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Args)]
struct ProblemArgs {
    /// Problem bundle directory.
    #[arg(long)]
    problem: Option<PathBuf>,
    /// Penalty model, e.g. `elastic-net`, `h1-tv`, `quad-quad:sq-l2,sq-h1`.
    /// Defaults to the bundle's own.
    #[arg(long)]
    model: Option<String>,
}

#[derive(Args)]
struct Solve {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    problem: ProblemArgs,
    /// Parameter pair `eta1,eta2`.
    #[arg(long, allow_hyphen_values = true)]
    eta: Option<String>,
    /// Inner solver tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Inner iteration cap.
    #[arg(long)]
    max_iter: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Principle {
    /// Balanced discrepancy principle (Broyden).
    Bdp,
    /// Balancing principle (fixed point).
    Balance,
    /// Grid search against the known solution.
    Oracle,
}

#[derive(Args)]
struct Select {
    principle: Principle,
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    cm: Option<f64>,
    /// Starting pair `eta1,eta2`.
    #[arg(long, allow_hyphen_values = true)]
    eta0: Option<String>,
    /// Outer tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Outer iteration cap.
    #[arg(long)]
    max_iter: Option<usize>,
    /// Oracle grid `lo:hi:n`.
    #[arg(long)]
    grid: Option<String>,
}

#[derive(Args)]
struct Reproduce {
    table: String,
    #[command(flatten)]
    common: Common,
    /// Example to run instead of the table's own.
    #[arg(long)]
    example: Option<String>,
    /// Comma-separated noise levels.
    #[arg(long)]
    eps: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    cm: Option<f64>,
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    /// Starting pair `eta1,eta2` for the discrepancy rule.
    #[arg(long, allow_hyphen_values = true)]
    eta0: Option<String>,
    /// Outer tolerance of the discrepancy rule.
    #[arg(long)]
    tol: Option<f64>,
    /// Outer iteration cap.
    #[arg(long)]
    max_iter: Option<usize>,
    /// Add balancing-principle columns.
    #[arg(long)]
    balance: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::MakeProblem(a) => make_problem(a),
        Command::Solve(a) => solve(a),
        Command::Select(a) => select(a),
        Command::Reproduce(a) => run_reproduce(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if matches!(e, Error::Parse(_) | Error::InvalidArgument(_) | Error::InvalidParams(..)) { 2 } else { 1 })
        }
    }
}

fn require<T>(v: Option<T>, what: &str) -> Result<T> {
    v.ok_or_else(|| Error::InvalidArgument(format!("missing --{what}")))
}

fn make_problem(a: MakeProblem) -> Result<bool> {
    let mut s = a.common.settings()?;
    s.set_opt("example", a.example);
    s.set_opt("eps", a.eps);
    s.set_opt("seed", a.seed);
    s.set_opt("n", a.n);
    let example: Example = require(s.get("example")?, "example")?;
    let cfg = ProblemConfig {
        example,
        n: s.get("n")?,
        eps: s.get("eps")?.unwrap_or(0.0),
        seed: s.get("seed")?.unwrap_or(1),
        subsample: None,
    };
    let out: PathBuf = require(s.raw("out").map(PathBuf::from), "out")?;
    let problem = build_problem(&cfg)?;
    let model = example.model(&problem);
    write_bundle(&problem, &out, &[("model", model.to_string())])?;
    println!("wrote {} (m={}, n={}, delta={})", out.display(), problem.m(), problem.n(), fmt_num(problem.delta()));
    Ok(true)
}

fn load(s: &Settings) -> Result<(Problem, PenaltyModel, PathBuf)> {
    let dir = require(s.raw("problem").map(PathBuf::from), "problem")?;
    let (problem, meta) = read_bundle(&dir)?;
    let spec = match s.raw("model").or(meta.get("model").map(String::as_str)) {
        Some(m) => m.to_string(),
        None => match meta.get("example") {
            Some(e) => e.parse::<Example>()?.model(&problem).to_string(),
            None => return Err(Error::InvalidArgument("no --model and the bundle names none".into())),
        },
    };
    let model = PenaltyModel::parse(&spec, problem.grid().h, problem.layout())?;
    Ok((problem, model, dir))
}

fn problem_settings(common: &Common, p: &ProblemArgs) -> Result<Settings> {
    let mut s = common.settings()?;
    s.set_opt("problem", p.problem.as_ref().map(|d| d.display().to_string()));
    s.set_opt("model", p.model.clone());
    Ok(s)
}

fn solution_text(problem: &Problem, sol: &TikhonovSolution) -> String {
    let mut t = String::new();
    let _ = writeln!(t, "eta1: {}", fmt_num(sol.weights[0]));
    let _ = writeln!(t, "eta2: {}", fmt_num(sol.weights[1]));
    let _ = writeln!(t, "phi: {}", fmt_num(sol.phi));
    let _ = writeln!(t, "psi1: {}", fmt_num(sol.psi[0]));
    let _ = writeln!(t, "psi2: {}", fmt_num(sol.psi[1]));
    let _ = writeln!(t, "objective: {}", fmt_num(sol.objective()));
    let _ = writeln!(t, "iterations: {}", sol.iterations);
    let _ = writeln!(t, "converged: {}", sol.converged);
    let _ = writeln!(t, "inner_residual: {}", fmt_num(sol.inner_residual));
    if let Some(ut) = problem.u_true() {
        if let Ok(e) = relative_error(&sol.u, ut) {
            let _ = writeln!(t, "relative_error: {}", fmt_num(e));
        }
    }
    t
}

fn write_solution(out: &Path, file: &str, text: &str, sol: &TikhonovSolution) -> Result<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join(file), text)?;
    write_vector(&out.join("u.csv"), &sol.u)
}

fn solve(a: Solve) -> Result<bool> {
    let mut s = problem_settings(&a.common, &a.problem)?;
    s.set_opt("eta", a.eta);
    s.set_opt("tol", a.tol);
    s.set_opt("max-iter", a.max_iter);
    let (problem, model, dir) = load(&s)?;
    let eta = require(s.pair("eta")?, "eta")?;
    let opts = SolverOptions { tol: s.get("tol")?, max_iter: s.get("max-iter")?, ..Default::default() };
    let sol = solve_tikhonov(&problem, &model, eta, &opts)?;
    let text = solution_text(&problem, &sol);
    let out = s.raw("out").map(PathBuf::from).unwrap_or_else(|| dir.join("solve"));
    write_solution(&out, "solution.txt", &text, &sol)?;
    print!("{text}");
    Ok(sol.converged)
}

fn select(a: Select) -> Result<bool> {
    let mut s = problem_settings(&a.common, &a.problem)?;
    s.set_opt("gamma", a.gamma);
    s.set_opt("cm", a.cm);
    s.set_opt("eta0", a.eta0);
    s.set_opt("tol", a.tol);
    s.set_opt("max-iter", a.max_iter);
    s.set_opt("grid", a.grid);
    let (problem, model, dir) = load(&s)?;
    let defaults = SelectionOptions::default();
    let opts = SelectionOptions {
        gamma: s.get("gamma")?.unwrap_or(defaults.gamma),
        c_m: s.get("cm")?.unwrap_or(defaults.c_m),
        eta0: s.pair("eta0")?,
        outer_tol: s.get("tol")?,
        outer_max_iter: s.get("max-iter")?,
        ..defaults
    };
    let (name, eta, sol, trace, converged) = match a.principle {
        Principle::Bdp | Principle::Balance => {
            let r = if matches!(a.principle, Principle::Bdp) {
                select_broyden(&problem, &model, problem.delta(), &opts)?
            } else {
                select_fixed_point(&problem, &model, opts.gamma, &opts)?
            };
            (r.principle.as_str(), r.eta_star.as_array(), r.solution, Some(r.trace), r.converged)
        }
        Principle::Oracle => {
            let grid = match s.raw("grid") {
                Some(g) => GridSpec::parse(g)?,
                None => GridSpec::default(),
            };
            let r = oracle_grid(&problem, &model, &grid, &opts.solver)?;
            let ok = r.failures == 0;
            ("oracle", r.weights, r.solution, None, ok)
        }
    };
    let mut text = format!("principle: {name}\n");
    let _ = writeln!(text, "converged: {converged}");
    if let Some(t) = &trace {
        let _ = writeln!(text, "outer_iterations: {}", t.last().map_or(0, |e| e.iter));
    }
    text.push_str(&solution_text(&problem, &sol));
    let out = s.raw("out").map(PathBuf::from).unwrap_or_else(|| dir.join(format!("select-{name}")));
    write_solution(&out, "result.txt", &text, &sol)?;
    if let Some(t) = &trace {
        write_trace_csv(&out.join("trace.csv"), t)?;
    }
    println!("eta* = ({}, {})", fmt_num(eta[0]), fmt_num(eta[1]));
    print!("{text}");
    Ok(converged)
}

fn run_reproduce(a: Reproduce) -> Result<bool> {
    let preset: Preset = a.table.parse()?;
    let mut s = a.common.settings()?;
    s.set_opt("example", a.example);
    s.set_opt("eps", a.eps);
    s.set_opt("seed", a.seed);
    s.set_opt("gamma", a.gamma);
    s.set_opt("cm", a.cm);
    s.set_opt("grid", a.grid);
    s.set_opt("n", a.n);
    s.set_opt("eta0", a.eta0);
    s.set_opt("tol", a.tol);
    s.set_opt("max-iter", a.max_iter);
    if a.balance {
        s.set("balance", "true");
    }
    let mut cfg = ExperimentConfig::preset(preset);
    cfg.apply(&s)?;
    if cfg.out_dir.is_none() {
        cfg.out_dir = Some(PathBuf::from(format!("out-{}", a.table)));
    }
    let report = reproduce(&cfg)?;
    print!("{}", report.table_csv());
    if let Some(d) = &cfg.out_dir {
        eprintln!("wrote {}", d.display());
    }
    Ok(report.all_converged())
}
