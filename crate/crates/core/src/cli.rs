//! Command-line front end.
//!
//! Exit codes: 0 success, 1 failed audit, 2 invalid input, 3 solver did not
//! converge.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::analysis::stability_check;
use crate::error::{check_dim, Error, Result};
use crate::experiment::{run_experiment, ExperimentConfig, ExperimentReport};
use crate::mmatrix::{Matrix, RoutingMatrix};
use crate::processes::{generate, ProcessSpec};
use crate::skorohod::{reflect, reflect_fixed_point, ReflectionSolution, TimeGrid, VectorPath, DEFAULT_TOL};

#[derive(Debug, Parser)]
#[command(name = "orthant", version, about = "Reflection of paths on the nonnegative orthant")]
pub struct Cli {
    /// Solver and audit tolerance.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Random seed (for `experiment`, overrides the base seed).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Suppress summaries.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    /// Worker threads for experiments.
    #[arg(long, global = true, env = "REFLECT_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Algorithm {
    Step,
    Fixedpoint,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Reflect a path CSV through a routing matrix.
    Solve {
        path: PathBuf,
        matrix: PathBuf,
        #[arg(long, value_enum, default_value = "step")]
        algorithm: Algorithm,
        /// Iteration cap for the fixed-point algorithm.
        #[arg(long, default_value_t = 100_000)]
        max_iter: usize,
    },
    /// Sample a path from a process specification.
    Generate {
        spec: PathBuf,
        #[arg(long)]
        horizon: f64,
        #[arg(long)]
        step: f64,
        /// Routing matrix for the stability verdict.
        #[arg(long)]
        routing: Option<PathBuf>,
    },
    /// Run an experiment configuration and write its report.
    Experiment { config: PathBuf },
    /// Audit a solution CSV against its input path and routing matrix.
    Check {
        solution: PathBuf,
        path: PathBuf,
        matrix: PathBuf,
    },
    /// Write report series as CSV.
    ExportSeries {
        report: PathBuf,
        /// Series to write; without it, `--out` is a directory that receives
        /// one file per series, or the names are listed.
        #[arg(long)]
        series: Option<String>,
    },
}

/// Parses arguments, runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    run(cli)
}

pub fn run(cli: Cli) -> i32 {
    if let Some(n) = cli.threads {
        // Fails only if a pool already exists, which then stays in use.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Solve {
            path,
            matrix,
            algorithm,
            max_iter,
        } => cmd_solve(cli, path, matrix, *algorithm, *max_iter),
        Command::Generate {
            spec,
            horizon,
            step,
            routing,
        } => cmd_generate(cli, spec, *horizon, *step, routing.as_deref()),
        Command::Experiment { config } => cmd_experiment(cli, config),
        Command::Check { solution, path, matrix } => cmd_check(cli, solution, path, matrix),
        Command::ExportSeries { report, series } => cmd_export_series(cli, report, series.as_deref()),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::input(format!("{}: {e}", path.display())))
}

fn read_path(path: &Path) -> Result<VectorPath> {
    VectorPath::read_csv(read(path)?.as_bytes())
}

fn read_routing(path: &Path) -> Result<RoutingMatrix> {
    RoutingMatrix::new(Matrix::parse_auto(&read(path)?)?)
}

fn tolerance(cli: &Cli) -> Result<f64> {
    let tol = cli.tol.unwrap_or(DEFAULT_TOL);
    if tol > 0.0 && tol.is_finite() {
        Ok(tol)
    } else {
        Err(Error::input(format!("tolerance must be positive, got {tol}")))
    }
}

/// Writes through `f` to `--out` or standard output.
fn emit(cli: &Cli, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match &cli.out {
        Some(p) => {
            let mut w = BufWriter::new(fs::File::create(p)?);
            f(&mut w)?;
            w.flush()?;
        }
        None => {
            let mut w = BufWriter::new(io::stdout().lock());
            f(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

/// Summary lines go to standard output when data goes to a file, and to
/// standard error otherwise.
fn summary(cli: &Cli, line: &str) {
    if cli.quiet {
        return;
    }
    if cli.out.is_some() {
        println!("{line}");
    } else {
        eprintln!("{line}");
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

fn cmd_solve(cli: &Cli, path: &Path, matrix: &Path, algorithm: Algorithm, max_iter: usize) -> Result<i32> {
    let tol = tolerance(cli)?;
    let x = read_path(path)?;
    let routing = read_routing(matrix)?;
    check_dim(routing.dim(), x.dim())?;
    let solution = match algorithm {
        Algorithm::Step => reflect(&x, &routing, tol)?,
        // The Picard stop rule bounds the last change, not the error; a
        // contraction factor of rho turns one into the other.
        Algorithm::Fixedpoint => reflect_fixed_point(&x, &routing, tol * (1.0 - routing.spectral_radius()), max_iter)?,
    };
    emit(cli, |w| solution.write_csv(w))?;
    summary(cli, &format!("residual: {:e}", solution.residual));
    summary(cli, &format!("terminal w: {}", join(solution.w.last())));
    summary(cli, &format!("terminal l: {}", join(solution.l.last())));
    Ok(0)
}

fn cmd_generate(cli: &Cli, spec: &Path, horizon: f64, step: f64, routing: Option<&Path>) -> Result<i32> {
    let spec: ProcessSpec = serde_json::from_str(&read(spec)?)?;
    spec.validate()?;
    let grid = TimeGrid::uniform(horizon, step)?;
    let routing = routing.map(read_routing).transpose()?;
    let x = generate(&spec, &grid, cli.seed.unwrap_or(0))?;
    emit(cli, |w| x.write_csv(w, "x"))?;
    let drift = spec.mean_drift()?;
    if let Some(rho) = &drift {
        summary(cli, &format!("mean drift: {}", join(rho)));
    }
    if let Some(r) = &routing {
        let Some(rho) = &drift else {
            return Err(Error::input("stability needs a process with a mean drift"));
        };
        let v = stability_check(rho, r)?;
        let label = if v.stable { "stable" } else { "unstable" };
        summary(cli, &format!("stability: {label} (margins: {})", join(&v.margins)));
    }
    Ok(0)
}

fn cmd_experiment(cli: &Cli, config: &Path) -> Result<i32> {
    let mut config: ExperimentConfig = serde_json::from_str(&read(config)?)?;
    if let Some(seed) = cli.seed {
        config.seeds.base = seed;
    }
    if let Some(tol) = cli.tol {
        config.tolerances.solver = tol;
    }
    let report = run_experiment(&config)?;
    emit(cli, |w| {
        w.write_all(report.to_json_string().as_bytes())?;
        w.write_all(b"\n")?;
        Ok(())
    })?;
    Ok(0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub check: String,
    pub index: usize,
    pub time: f64,
    pub coordinate: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub passed: bool,
    pub tol: f64,
    pub max_residual: f64,
    pub violations: Vec<Violation>,
}

/// Checks a discrete solution: the defining equation `W = X + (I - Pᵗ)L`,
/// monotone nonnegative `L`, nonnegative `W`, and that `L_i` only increases
/// at steps where `W_i` is zero.
///
/// The tolerance is scaled by `max(1, ‖X‖∞ + ‖L‖∞)` so that rounding on
/// large paths is not flagged.
pub fn audit_solution(
    solution: &ReflectionSolution,
    x: &VectorPath,
    routing: &RoutingMatrix,
    tol: f64,
) -> Result<AuditReport> {
    let n = routing.dim();
    check_dim(n, x.dim())?;
    check_dim(n, solution.dim())?;
    if !solution.grid().same_as(x.grid()) {
        return Err(Error::input("solution and path grids differ"));
    }
    let sup = |p: &VectorPath| p.values().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let eff = tol * (sup(x) + sup(&solution.l)).max(1.0);
    let mut violations = Vec::new();
    let mut max_residual = 0.0_f64;
    let mut rl = vec![0.0; n];
    let mut flag = |check: &str, index: usize, coordinate: usize, value: f64| {
        violations.push(Violation {
            check: check.to_string(),
            index,
            time: x.grid().time(index),
            coordinate,
            value,
        });
    };
    for k in 0..x.len() {
        let (w, l, xk) = (solution.w.point(k), solution.l.point(k), x.point(k));
        routing.apply_reflection_into(l, &mut rl);
        for i in 0..n {
            let r = w[i] - xk[i] - rl[i];
            max_residual = max_residual.max(r.abs());
            if !(r.abs() <= eff) {
                flag("residual", k, i, r);
            }
            if !(w[i] >= -eff) {
                flag("nonnegativity", k, i, w[i]);
            }
            let dl = if k == 0 {
                l[i]
            } else {
                l[i] - solution.l.point(k - 1)[i]
            };
            if !(dl >= -eff) {
                flag("monotonicity", k, i, dl);
            }
            if dl > eff && w[i] > eff {
                flag("complementarity", k, i, w[i]);
            }
        }
    }
    Ok(AuditReport {
        passed: violations.is_empty(),
        tol: eff,
        max_residual,
        violations,
    })
}

const MAX_LISTED: usize = 50;

fn cmd_check(cli: &Cli, solution: &Path, path: &Path, matrix: &Path) -> Result<i32> {
    let tol = tolerance(cli)?;
    let sol = ReflectionSolution::read_csv(read(solution)?.as_bytes())?;
    let x = read_path(path)?;
    let routing = read_routing(matrix)?;
    let report = audit_solution(&sol, &x, &routing, tol)?;
    if let Some(p) = &cli.out {
        fs::write(p, serde_json::to_string_pretty(&report)? + "\n")?;
    }
    if report.passed {
        if !cli.quiet {
            println!("ok: {} points, max residual {:e}", x.len(), report.max_residual);
        }
        return Ok(0);
    }
    for v in report.violations.iter().take(MAX_LISTED) {
        println!(
            "violation: {} at index {} (t = {}), coordinate {}: {:e}",
            v.check,
            v.index,
            v.time,
            v.coordinate + 1,
            v.value
        );
    }
    if report.violations.len() > MAX_LISTED {
        println!("... {} more", report.violations.len() - MAX_LISTED);
    }
    eprintln!("audit failed: {} violations", report.violations.len());
    Ok(1)
}

fn write_series(w: &mut dyn Write, name: &str, t: &[f64], values: &[f64]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["t", name])?;
    for (t, v) in t.iter().zip(values) {
        csv.write_record([t.to_string(), v.to_string()])?;
    }
    csv.flush()?;
    Ok(())
}

fn cmd_export_series(cli: &Cli, report: &Path, series: Option<&str>) -> Result<i32> {
    let report: ExperimentReport = serde_json::from_str(&read(report)?)?;
    match series {
        Some(name) => {
            let s = report
                .series(name)
                .ok_or_else(|| Error::input(format!("report has no series named {name:?}")))?;
            emit(cli, |w| write_series(w, &s.name, &s.t, &s.values))?;
        }
        None => match &cli.out {
            Some(dir) => {
                fs::create_dir_all(dir)?;
                for s in &report.series {
                    let mut f = BufWriter::new(fs::File::create(dir.join(format!("{}.csv", s.name)))?);
                    write_series(&mut f, &s.name, &s.t, &s.values)?;
                    f.flush()?;
                }
                summary(
                    cli,
                    &format!("wrote {} series to {}", report.series.len(), dir.display()),
                );
            }
            None => {
                for s in &report.series {
                    println!("{}", s.name);
                }
            }
        },
    }
    Ok(0)
}
