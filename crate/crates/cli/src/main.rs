use std::fs;
use std::io::{self, IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nonlocal_core::config::{parse_config, RunSpec};
use nonlocal_core::harness::{
    convergence_csv, run_convergence, run_reproduce_tables, run_solve, ExitStatus,
};
use nonlocal_core::{Error, Method};

#[derive(Parser)]
#[command(
    name = "nonlocal",
    version,
    about = "Solve two-point nonlocal evolution problems on Chebyshev meshes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the configured problem and write nodal values as CSV.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Mesh degree; overrides `solver.n`.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, value_parser = parse_method)]
        method: Option<Method>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Spatial point for sine-series output; overrides `output.x`.
        #[arg(long)]
        x: Option<f64>,
    },
    /// Reproduce the heat-equation error tables for n = 4, 6, 8, 12, 16.
    ReproduceTables {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate max nodal error, iterations and contraction factor per degree.
    Convergence {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "4,6,8,12,16")]
        n: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse()
}

/// A failure and the exit status it maps to.
struct Failure {
    status: ExitStatus,
    message: String,
}

impl Failure {
    fn config(message: impl ToString) -> Self {
        Self {
            status: ExitStatus::ConfigError,
            message: message.to_string(),
        }
    }

    fn run(err: Error) -> Self {
        let status = match err {
            Error::InvalidArgument(_)
            | Error::InvalidDegree(_)
            | Error::DimensionMismatch { .. } => ExitStatus::ConfigError,
            _ => ExitStatus::AcceptanceFailure,
        };
        Self {
            status,
            message: err.to_string(),
        }
    }
}

fn load(path: &Path) -> Result<RunSpec, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

fn emit(csv: &str, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(path) => {
            fs::write(path, csv).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
        }
        None => io::stdout()
            .lock()
            .write_all(csv.as_bytes())
            .map_err(|e| Failure::config(format!("stdout: {e}"))),
    }
}

fn validate_n(n: &[usize]) -> Result<(), Failure> {
    if n.is_empty() {
        return Err(Failure::config("--n: at least one degree is required"));
    }
    match n.iter().find(|&&n| n < 2) {
        Some(bad) => Err(Failure::config(format!(
            "--n: degree must be at least 2, got {bad}"
        ))),
        None => Ok(()),
    }
}

fn run(cli: Cli) -> Result<ExitStatus, Failure> {
    match cli.command {
        Command::Solve {
            config,
            n,
            method,
            tol,
            out,
            x,
        } => {
            let mut spec = load(&config)?;
            if let Some(n) = n {
                validate_n(&[n])?;
                spec.n = vec![n];
            }
            if let Some(method) = method {
                spec.method = method;
            }
            if let Some(tol) = tol {
                if tol.is_nan() || tol <= 0.0 {
                    return Err(Failure::config(format!(
                        "--tol: must be positive, got {tol}"
                    )));
                }
                spec.tol = tol;
            }
            if let Some(x) = x {
                spec.x = x;
            }
            let result = run_solve(&spec).map_err(Failure::run)?;
            for report in &result.reports {
                for w in &report.warnings {
                    warn(&format!("n={}: {w}", report.mesh.degree()));
                }
            }
            emit(&result.csv(), out.or(spec.output).as_deref())?;
            Ok(ExitStatus::Success)
        }
        Command::ReproduceTables { out } => {
            let tables = run_reproduce_tables(&RunSpec::builtin_heat()).map_err(Failure::run)?;
            emit(&tables.csv(), out.as_deref())?;
            eprint!("{}", tables.summary());
            Ok(tables.status())
        }
        Command::Convergence { config, n, out } => {
            let mut spec = load(&config)?;
            validate_n(&n)?;
            spec.n = n;
            let rows = run_convergence(&spec).map_err(Failure::run)?;
            emit(&convergence_csv(&rows), out.or(spec.output).as_deref())?;
            Ok(ExitStatus::Success)
        }
    }
}

fn use_color() -> bool {
    std::env::var_os("NO_COLOR").is_none() && io::stderr().is_terminal()
}

fn diagnostic(label: &str, color: &str, message: &str) {
    if use_color() {
        eprintln!("\x1b[1;{color}m{label}:\x1b[0m {message}");
    } else {
        eprintln!("{label}: {message}");
    }
}

fn warn(message: &str) {
    diagnostic("warning", "33", message);
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(status) => ExitCode::from(status.code() as u8),
        Err(f) => {
            diagnostic("error", "31", &f.message);
            ExitCode::from(f.status.code() as u8)
        }
    }
}
