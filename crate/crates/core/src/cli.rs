//! Command-line front end.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Result, WmcenError};
use crate::io::{load_csv, load_model, save_model, write_csv, ModelFile};
use crate::report::{read_study_table, render_summary, strip_plot_svg, study_rows, summarize, write_study_table};
use crate::simgen::{run_study, ErrorKind, Method, SimulationSpec, StudyGrid};
use crate::solver::fit;
use crate::tuning::{default_grid, grid_search, Criterion};
use crate::types::{validate_dataset, Hyperparams, SolverConfig};

#[derive(Debug, Parser)]
#[command(name = "wmcen", version, about = "Rank-based multi-response regression with clustered coefficients")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit one model and write it as JSON.
    Fit(FitArgs),
    /// Apply a saved model to new covariates.
    Predict(PredictArgs),
    /// Cross-validate a (lambda, gamma, k) grid.
    Cv(CvArgs),
    /// Run a simulation study and write one row per replication.
    Simulate(SimulateArgs),
    /// Summarize study tables and optionally draw metric plots.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct InputArgs {
    /// First line of each input file is a header.
    #[arg(long)]
    header: bool,
    /// Field delimiter of input files.
    #[arg(long, default_value_t = ',')]
    delimiter: char,
}

impl InputArgs {
    fn load(&self, path: &Path) -> Result<nalgebra::DMatrix<f64>> {
        if !self.delimiter.is_ascii() {
            return Err(WmcenError::InvalidParameter("delimiter must be ASCII".into()));
        }
        load_csv(path, self.header, self.delimiter as u8)
    }
}

#[derive(Debug, Args)]
struct SolverArgs {
    /// Stop when the objective decreases by less than this.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 500)]
    max_inner: usize,
    #[arg(long, default_value_t = 100)]
    max_outer: usize,
    /// Seed for cluster initialization and fold assignment.
    #[arg(long, env = "WMCEN_SEED", default_value_t = 0)]
    seed: u64,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            tol: self.tol,
            max_inner_iters: self.max_inner,
            max_outer_iters: self.max_outer,
            seed: self.seed,
            ..SolverConfig::default()
        }
    }
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long)]
    x: PathBuf,
    #[arg(long)]
    y: PathBuf,
    #[arg(long)]
    lambda: f64,
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = Hyperparams::DEFAULT_EPSILON)]
    epsilon: f64,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    input: InputArgs,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    x: PathBuf,
    #[command(flatten)]
    input: InputArgs,
    /// Prediction file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CriterionArg {
    MedianApe,
    MeanSquared,
}

impl From<CriterionArg> for Criterion {
    fn from(c: CriterionArg) -> Self {
        match c {
            CriterionArg::MedianApe => Criterion::MedianApe,
            CriterionArg::MeanSquared => Criterion::MeanSquared,
        }
    }
}

#[derive(Debug, Args)]
struct CvArgs {
    #[arg(long)]
    x: PathBuf,
    #[arg(long)]
    y: PathBuf,
    /// Comma-separated lambdas; ten log-spaced multiples of lambda_max when omitted.
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
    /// Comma-separated gammas; same default as lambdas.
    #[arg(long, value_delimiter = ',')]
    gammas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    ks: Option<Vec<usize>>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, value_enum, default_value_t = CriterionArg::MedianApe)]
    criterion: CriterionArg,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    input: InputArgs,
    /// Score table; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Wmcen,
    Wlasso,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GridArg {
    Compact,
    Full,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 12)]
    p: usize,
    #[arg(long)]
    eta: f64,
    #[arg(long)]
    xi: f64,
    /// 1 normal, 2 contaminated normal, 3 scaled t(4), 4 Cauchy.
    #[arg(long)]
    error: ErrorKind,
    #[arg(long, default_value_t = 20)]
    reps: usize,
    #[arg(long, env = "WMCEN_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = MethodArg::Wmcen)]
    method: MethodArg,
    #[arg(long, value_enum, default_value_t = GridArg::Compact)]
    grid: GridArg,
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    /// Study table; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// One or more study tables.
    #[arg(long = "in", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    /// Summary file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for ape.svg and mse.svg.
    #[arg(long)]
    plot_dir: Option<PathBuf>,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run_fit(a: &FitArgs) -> Result<()> {
    let data = validate_dataset(a.input.load(&a.x)?, a.input.load(&a.y)?)?;
    let hp = Hyperparams::new(a.lambda, a.gamma, a.k, a.epsilon)?;
    let result = fit(&data, &hp, &a.solver.config())?;
    if !result.converged {
        log::warn!("iteration cap reached before the objective settled");
    }
    save_model(&a.out, &ModelFile::from_fit(&result))?;
    log::info!(
        "objective {} after {} inner sweeps, converged {}",
        result.objective(),
        result.inner_iters,
        result.converged
    );
    Ok(())
}

fn run_predict(a: &PredictArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let x = a.input.load(&a.x)?;
    let y_hat = model.predict(&x)?;
    write_csv(output(a.out.as_deref())?, &y_hat, None)
}

fn run_cv(a: &CvArgs) -> Result<()> {
    let data = validate_dataset(a.input.load(&a.x)?, a.input.load(&a.y)?)?;
    let cfg = a.solver.config();
    let mut grid = default_grid(&data, &cfg, a.solver.seed)?;
    if let Some(l) = &a.lambdas {
        grid.lambdas = l.clone();
    }
    if let Some(g) = &a.gammas {
        grid.gammas = g.clone();
    }
    if let Some(k) = &a.ks {
        grid.ks = k.clone();
    }
    grid.folds = a.folds;
    grid.criterion = a.criterion.into();
    let (best, table) = grid_search(&data, &grid, &cfg)?;
    let mut out = csv::Writer::from_writer(output(a.out.as_deref())?);
    let io_err = |e: csv::Error| WmcenError::Io(io::Error::other(e));
    out.write_record(["lambda", "gamma", "k", "score", "selected"]).map_err(io_err)?;
    for c in &table {
        let h = c.hyperparams;
        out.write_record([
            h.lambda.to_string(),
            h.gamma.to_string(),
            h.k.to_string(),
            c.score.to_string(),
            (h == best).to_string(),
        ])
        .map_err(io_err)?;
    }
    out.flush()?;
    Ok(())
}

fn run_simulate(a: &SimulateArgs) -> Result<()> {
    let spec = SimulationSpec::new(a.p, a.eta, a.xi, a.error, a.reps, a.seed);
    let grid = match a.grid {
        GridArg::Compact => StudyGrid::compact(),
        GridArg::Full => StudyGrid::full(),
    };
    let cfg = SolverConfig {
        tol: a.tol,
        seed: a.seed,
        ..SolverConfig::default()
    };
    let methods: &[Method] = match a.method {
        MethodArg::Wmcen => &[Method::Wmcen],
        MethodArg::Wlasso => &[Method::WilcoxonLasso],
        MethodArg::Both => &[Method::Wmcen, Method::WilcoxonLasso],
    };
    let mut results = Vec::new();
    for &m in methods {
        results.push(run_study(&spec, m, &grid, &cfg)?);
    }
    write_study_table(output(a.out.as_deref())?, &study_rows(&results))
}

fn run_report(a: &ReportArgs) -> Result<()> {
    let mut rows = Vec::new();
    for path in &a.inputs {
        rows.extend(read_study_table(File::open(path)?)?);
    }
    let cells = summarize(&rows);
    let mut out = output(a.out.as_deref())?;
    out.write_all(render_summary(&cells).as_bytes())?;
    out.flush()?;
    if let Some(dir) = &a.plot_dir {
        fs::create_dir_all(dir)?;
        fs::write(
            dir.join("ape.svg"),
            strip_plot_svg("median absolute prediction error per replication", &cells, |c| &c.ape),
        )?;
        fs::write(
            dir.join("mse.svg"),
            strip_plot_svg("coefficient MSE per replication", &cells, |c| &c.mse),
        )?;
    }
    Ok(())
}

/// Parses `argv` (program name first) and runs the subcommand. Returns the
/// process exit code: 0 on success, 1 on a failed operation, 2 on bad usage.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let outcome = match &cli.command {
        Command::Fit(a) => run_fit(a),
        Command::Predict(a) => run_predict(a),
        Command::Cv(a) => run_cv(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Report(a) => run_report(a),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
