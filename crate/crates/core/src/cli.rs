//! Command-line front end.
//!
//! Every command writes `<out>.json`; `simulate`, `solve` and `analytic`
//! also write the law on a grid to `<out>.csv` with header
//! `x,cdf,density,atom`. Exit codes: 0 ok, 2 bad input, 3 unstable
//! configuration, 4 non-convergence, 5 failed validation.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Serialize, Serializer};

use crate::closedform::{ddet_exp_solution, dm_exp_solution, StationaryLaw};
use crate::compare::{run_comparison, solve_stationary, Check, ClosedForm, CompareOptions};
use crate::model::{
    check_stability, Boundary, Discipline, Estimate, MixedDistribution, QueueConfig,
    SimulationSummary,
};
use crate::montecarlo::{default_burn_in, estimate_stationary, SimulationOptions};
use crate::solver::StationarySolution;
use crate::{Error, Result};

/// Version of the JSON layout described by `schemas/result.json`.
pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_BAD_INPUT: i32 = 2;
pub const EXIT_UNSTABLE: i32 = 3;
pub const EXIT_NO_CONVERGENCE: i32 = 4;
pub const EXIT_VALIDATION: i32 = 5;
const EXIT_INTERNAL: i32 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "vacq",
    version,
    about = "Waiting times in a periodic-arrival vacation queue with a deadline"
)]
struct Cli {
    /// Worker threads for parallel work; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Replicated Monte Carlo estimate of the stationary law.
    Simulate(SimulateArgs),
    /// Numerical fixed-point solution of the stationary law.
    Solve(SolveArgs),
    /// Explicit stationary solution for exponential vacations.
    Analytic(AnalyticArgs),
    /// Run every applicable method and check them against each other.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Model {
    Reneging,
    Balking,
}

impl From<Model> for Discipline {
    fn from(m: Model) -> Self {
        match m {
            Model::Reneging => Discipline::Reneging,
            Model::Balking => Discipline::Balking,
        }
    }
}

#[derive(Debug, Args)]
struct ModelArgs {
    #[arg(long, value_enum)]
    model: Model,
    /// Inter-arrival period.
    #[arg(long = "T", value_name = "T")]
    period: f64,
    /// Deadline on the waiting time.
    #[arg(long = "K", value_name = "K")]
    deadline: f64,
    /// Service law: det:<value>, exp:<rate> or tab:<path.csv>.
    #[arg(long)]
    service: String,
    /// Vacation law, same format as --service.
    #[arg(long)]
    vacation: String,
}

impl ModelArgs {
    fn config(&self) -> Result<QueueConfig> {
        QueueConfig::new(
            self.period,
            self.deadline,
            self.service.parse()?,
            self.vacation.parse()?,
            self.model.into(),
        )
    }
}

#[derive(Debug, Args)]
struct SimulationArgs {
    /// Customers per replication, burn-in included.
    #[arg(long)]
    customers: usize,
    #[arg(long)]
    reps: usize,
    /// Customers discarded at the start of each replication.
    #[arg(long)]
    burnin: Option<usize>,
    #[arg(long, env = "VACQ_SEED", default_value_t = 1)]
    seed: u64,
    /// Histogram bins on [0, K].
    #[arg(long, default_value_t = 200)]
    bins: usize,
}

impl SimulationArgs {
    fn options(&self) -> Result<SimulationOptions> {
        if self.customers < 2 || self.reps == 0 || self.bins == 0 {
            return Err(Error::InvalidArgument(
                "--customers must be at least 2, --reps and --bins at least 1".into(),
            ));
        }
        let burn_in = self
            .burnin
            .unwrap_or_else(|| default_burn_in(self.customers));
        if burn_in >= self.customers {
            return Err(Error::InvalidArgument(format!(
                "--burnin ({burn_in}) must be below --customers ({})",
                self.customers
            )));
        }
        Ok(SimulationOptions::new(self.customers, self.reps, self.seed)
            .with_burn_in(burn_in)
            .with_grid_size(self.bins))
    }
}

#[derive(Debug, Args)]
struct SolverArgs {
    /// Grid intervals on [0, K].
    #[arg(long, default_value_t = 4096)]
    grid: usize,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long = "max-iter", default_value_t = 100_000)]
    max_iter: usize,
}

impl SolverArgs {
    fn check(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) || self.max_iter == 0 {
            return Err(Error::InvalidArgument(
                "--tol must be positive and --max-iter at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    simulation: SimulationArgs,
    /// Output path without extension.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Case {
    /// Deterministic service.
    DExp,
    /// Exponential service.
    MExp,
}

#[derive(Debug, Args)]
struct AnalyticArgs {
    #[arg(long, value_enum)]
    case: Case,
    /// Vacation rate.
    #[arg(long)]
    lambda: f64,
    /// Deterministic service time (d-exp).
    #[arg(long)]
    sigma: Option<f64>,
    /// Service rate (m-exp).
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long = "T", value_name = "T")]
    period: f64,
    #[arg(long = "K", value_name = "K")]
    deadline: f64,
    /// Grid intervals on [0, K] for the CSV.
    #[arg(long, default_value_t = 1000)]
    grid: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    simulation: SimulationArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: PathBuf,
}

/// Parses the process arguments, runs the command and returns the exit code.
pub fn run() -> i32 {
    run_from(std::env::args_os())
}

pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return EXIT_BAD_INPUT;
        }
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return EXIT_INTERNAL;
        }
    };
    match pool.install(|| dispatch(cli.command)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Exit code for a library error.
pub fn exit_code(error: &Error) -> i32 {
    match error {
        Error::InvalidDistribution(_)
        | Error::InvalidConfig(_)
        | Error::InvalidArgument(_)
        | Error::EqualRates(_)
        | Error::RepeatedRoots(_)
        | Error::Io(_)
        | Error::Csv(_) => EXIT_BAD_INPUT,
        Error::Unstable { .. } => EXIT_UNSTABLE,
        Error::NonConvergence { .. } | Error::TruncationLimit { .. } => EXIT_NO_CONVERGENCE,
        Error::NegativeDensity { .. } => EXIT_VALIDATION,
        Error::Json(_) => EXIT_INTERNAL,
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Simulate(a) => simulate(&a),
        Command::Solve(a) => solve(&a),
        Command::Analytic(a) => analytic(&a),
        Command::Compare(a) => compare(&a),
    }
}

/// Compact description of a grid law; the CSV carries the values.
#[derive(Debug, Serialize)]
struct LawSummary {
    atom0: f64,
    boundary_mass: f64,
    boundary: Boundary,
    step: f64,
    intervals: usize,
    x_max: f64,
    mean: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    density_jump: Option<JumpSummary>,
}

#[derive(Debug, Serialize)]
struct JumpSummary {
    x: f64,
    left: f64,
    right: f64,
}

impl From<&MixedDistribution> for LawSummary {
    fn from(d: &MixedDistribution) -> Self {
        Self {
            atom0: d.atom0(),
            boundary_mass: d.boundary_mass(),
            boundary: d.boundary(),
            step: d.step(),
            intervals: d.intervals(),
            x_max: d.x_max(),
            mean: d.mean(),
            density_jump: d.density_jump().map(|(i, left)| JumpSummary {
                x: d.node(i),
                left,
                right: d.density()[i],
            }),
        }
    }
}

#[derive(Debug, Serialize)]
struct SimulationView {
    n_customers: usize,
    n_replications: usize,
    burn_in: usize,
    seed: u64,
    stable: bool,
    w0: Estimate,
    bk: Estimate,
    mean_wait: Estimate,
}

impl From<&SimulationSummary> for SimulationView {
    fn from(s: &SimulationSummary) -> Self {
        Self {
            n_customers: s.n_customers,
            n_replications: s.n_replications,
            burn_in: s.burn_in,
            seed: s.seed,
            stable: s.stable,
            w0: s.w0,
            bk: s.bk,
            mean_wait: s.mean_wait,
        }
    }
}

#[derive(Debug, Serialize)]
struct SolverView {
    grid: usize,
    tol: f64,
    w0: f64,
    bk: f64,
    bk_formula: f64,
    iterations: usize,
    residual: f64,
}

impl SolverView {
    fn new(s: &StationarySolution, args: &SolverArgs) -> Self {
        Self {
            grid: args.grid,
            tol: args.tol,
            w0: s.distribution.atom0(),
            bk: s.bk,
            bk_formula: s.bk_formula,
            iterations: s.iterations,
            residual: s.residual,
        }
    }
}

#[derive(Debug, Serialize)]
struct SimulateOutput<'a> {
    schema_version: u32,
    command: &'static str,
    config: &'a QueueConfig,
    #[serde(flatten)]
    simulation: SimulationView,
    #[serde(skip_serializing_if = "Option::is_none")]
    warning: Option<String>,
    distribution: LawSummary,
}

#[derive(Debug, Serialize)]
struct SolveOutput<'a> {
    schema_version: u32,
    command: &'static str,
    config: &'a QueueConfig,
    #[serde(flatten)]
    solver: SolverView,
    distribution: LawSummary,
}

#[derive(Debug, Serialize)]
struct Identities {
    /// `|gamma1 + gamma2 + a|`.
    root_sum: f64,
    /// `|gamma1 gamma2 - b|`.
    root_product: f64,
    /// Largest `|denominator(gamma_i)|`.
    denominator: f64,
}

#[derive(Debug, Serialize)]
struct AnalyticOutput {
    schema_version: u32,
    command: &'static str,
    solution: ClosedForm,
    normalization_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    identities: Option<Identities>,
}

/// `"n/a"` in place of a missing explicit solution.
fn closed_form_or_na<S: Serializer>(
    value: &Option<ClosedForm>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    match value {
        Some(cf) => cf.serialize(s),
        None => s.serialize_str("n/a"),
    }
}

#[derive(Debug, Serialize)]
struct CompareOutput<'a> {
    schema_version: u32,
    command: &'static str,
    config: &'a QueueConfig,
    #[serde(serialize_with = "closed_form_or_na")]
    closedform: Option<ClosedForm>,
    simulation: SimulationView,
    solver: SolverView,
    checks: &'a [Check],
    pass: bool,
}

fn simulate(a: &SimulateArgs) -> Result<i32> {
    let config = a.model.config()?;
    let options = a.simulation.options()?;
    let summary = estimate_stationary(&config, &options)?;
    let warning = (!summary.stable).then(|| {
        format!(
            "unstable configuration: P(service + vacation < T) = {}; estimates describe a transient regime",
            check_stability(&config).probability
        )
    });
    if let Some(w) = &warning {
        eprintln!("warning: {w}");
    }
    write_law_csv(&a.out, &summary.empirical)?;
    write_json(
        &a.out,
        &SimulateOutput {
            schema_version: SCHEMA_VERSION,
            command: "simulate",
            config: &config,
            simulation: (&summary).into(),
            warning,
            distribution: (&summary.empirical).into(),
        },
    )?;
    Ok(EXIT_OK)
}

fn solve(a: &SolveArgs) -> Result<i32> {
    let config = a.model.config()?;
    a.solver.check()?;
    let s = solve_stationary(&config, a.solver.grid, a.solver.tol, a.solver.max_iter)?;
    write_law_csv(&a.out, &s.distribution)?;
    write_json(
        &a.out,
        &SolveOutput {
            schema_version: SCHEMA_VERSION,
            command: "solve",
            config: &config,
            solver: SolverView::new(&s, &a.solver),
            distribution: (&s.distribution).into(),
        },
    )?;
    Ok(EXIT_OK)
}

fn analytic(a: &AnalyticArgs) -> Result<i32> {
    if a.grid == 0 {
        return Err(Error::InvalidArgument("--grid must be at least 1".into()));
    }
    let (solution, identities) = match a.case {
        Case::DExp => {
            let sigma = a
                .sigma
                .ok_or_else(|| Error::InvalidArgument("--case d-exp needs --sigma".into()))?;
            (
                ClosedForm::DExp(ddet_exp_solution(a.lambda, sigma, a.period, a.deadline)?),
                None,
            )
        }
        Case::MExp => {
            let mu =
                a.mu.ok_or_else(|| Error::InvalidArgument("--case m-exp needs --mu".into()))?;
            let s = dm_exp_solution(a.lambda, mu, a.period, a.deadline)?;
            let m = &s.modes;
            let [g1, g2] = m.gamma;
            let identities = Identities {
                root_sum: (g1 + g2 + m.a).norm(),
                root_product: (g1 * g2 - m.b).norm(),
                denominator: m
                    .gamma
                    .iter()
                    .map(|&g| m.transform_denominator(g).norm())
                    .fold(0.0, f64::max),
            };
            (ClosedForm::MExp(s), Some(identities))
        }
    };
    let law = solution.law();
    write_closed_form_csv(&a.out, law, a.grid)?;
    write_json(
        &a.out,
        &AnalyticOutput {
            schema_version: SCHEMA_VERSION,
            command: "analytic",
            normalization_error: law.normalization_error(),
            solution,
            identities,
        },
    )?;
    Ok(EXIT_OK)
}

fn compare(a: &CompareArgs) -> Result<i32> {
    let config = a.model.config()?;
    a.solver.check()?;
    let options = CompareOptions {
        simulation: a.simulation.options()?,
        grid_size: a.solver.grid,
        tol: a.solver.tol,
        max_iter: a.solver.max_iter,
    };
    let report = run_comparison(&config, &options)?;
    write_json(
        &a.out,
        &CompareOutput {
            schema_version: SCHEMA_VERSION,
            command: "compare",
            config: &config,
            closedform: report.closedform.clone(),
            simulation: (&report.simulation).into(),
            solver: SolverView::new(&report.solver, &a.solver),
            checks: &report.checks,
            pass: report.pass,
        },
    )?;
    for c in &report.checks {
        eprintln!(
            "{}: {} = {:.3e} (threshold {:.1e})",
            if c.pass { "pass" } else { "FAIL" },
            c.name,
            c.value,
            c.threshold
        );
    }
    Ok(if report.pass {
        EXIT_OK
    } else {
        EXIT_VALIDATION
    })
}

fn with_extension(out: &Path, ext: &str) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn write_json<T: Serialize>(out: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(with_extension(out, "json"))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Row {
    x: f64,
    cdf: f64,
    density: f64,
    atom: f64,
}

fn write_rows(out: &Path, rows: impl IntoIterator<Item = Row>) -> Result<()> {
    let mut w = csv::Writer::from_path(with_extension(out, "csv"))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per grid node. Row 0 carries the atom at 0 and the last row the
/// boundary mass; `cdf` includes the boundary mass only when it is an atom at
/// `x_max`. A density jump gets two rows at the same `x`, left limit first.
fn write_law_csv(out: &Path, d: &MixedDistribution) -> Result<()> {
    let n = d.intervals();
    let jump = d.density_jump();
    let mut rows = Vec::with_capacity(n + 2);
    for (i, (cdf, &density)) in d.cdf_nodes().into_iter().zip(d.density()).enumerate() {
        let x = d.node(i);
        if let Some((_, left)) = jump.filter(|&(j, _)| j == i) {
            rows.push(Row {
                x,
                cdf,
                density: left,
                atom: 0.0,
            });
        }
        let atom = match i {
            0 => d.atom0(),
            i if i == n => d.boundary_mass(),
            _ => 0.0,
        };
        rows.push(Row {
            x,
            cdf,
            density,
            atom,
        });
    }
    write_rows(out, rows)
}

fn write_closed_form_csv(out: &Path, law: &dyn StationaryLaw, grid: usize) -> Result<()> {
    let k = law.deadline();
    let h = k / grid as f64;
    let rows = (0..=grid).map(|i| {
        let x = if i == grid { k } else { i as f64 * h };
        Row {
            x,
            cdf: law.cdf(x),
            density: law.density(x),
            atom: match i {
                0 => law.w0(),
                i if i == grid => law.bk(),
                _ => 0.0,
            },
        }
    });
    write_rows(out, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_error_kind() {
        assert_eq!(exit_code(&Error::InvalidConfig("x".into())), EXIT_BAD_INPUT);
        assert_eq!(exit_code(&Error::EqualRates(1.0)), EXIT_BAD_INPUT);
        assert_eq!(
            exit_code(&Error::Unstable { probability: 0.0 }),
            EXIT_UNSTABLE
        );
        assert_eq!(
            exit_code(&Error::NonConvergence {
                iterations: 1,
                residual: 1.0
            }),
            EXIT_NO_CONVERGENCE
        );
        assert_eq!(
            exit_code(&Error::NegativeDensity {
                x: 0.0,
                value: -1.0
            }),
            EXIT_VALIDATION
        );
    }

    #[test]
    fn extension_is_appended() {
        assert_eq!(
            with_extension(Path::new("dir/w.v1"), "csv"),
            PathBuf::from("dir/w.v1.csv")
        );
    }

    #[test]
    fn parser_accepts_the_documented_flags() {
        let cli = Cli::try_parse_from([
            "vacq",
            "simulate",
            "--model",
            "reneging",
            "--T",
            "2",
            "--K",
            "3",
            "--service",
            "det:0.5",
            "--vacation",
            "exp:1",
            "--customers",
            "1000",
            "--reps",
            "2",
            "--seed",
            "42",
            "--out",
            "w",
        ])
        .unwrap();
        match cli.command {
            Command::Simulate(a) => {
                assert_eq!(a.model.period, 2.0);
                assert_eq!(a.simulation.seed, 42);
                assert!(a.model.config().is_ok());
            }
            other => panic!("parsed {other:?}"),
        }
        assert!(Cli::try_parse_from(["vacq", "solve", "--model", "reneging"]).is_err());
    }

    #[test]
    fn complex_roots_serialize_as_pairs() {
        use num_complex::Complex64;
        let v = serde_json::to_value([Complex64::new(1.0, -2.0)]).unwrap();
        assert_eq!(v, serde_json::json!([[1.0, -2.0]]));
    }
}
