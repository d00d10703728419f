//! Runs described by a [`RunSpec`] and their CSV output.
//!
//! All numbers are written as `{:.7e}` (eight significant digits) with `\n`
//! line endings, so output is byte-identical across runs. The one exception is
//! the `wallclock_s` column of [`run_convergence`].

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::config::{ProblemKind, RunSpec, TABLE_DEGREES};
use crate::operator::NonlocalProblem;
use crate::oracles::{nonlocal_oracle, DEFAULT_PANELS};
use crate::solver::{solve_nonlocal_with, SolveReport};
use crate::{Error, Result, State};

pub const SOLUTION_HEADER: &str = "n,k,t,approx,exact,abs_error";
pub const CONVERGENCE_HEADER: &str = "n,max_nodal_error,iterations,contraction_q,wallclock_s";

/// Reference errors at `(x, t) = (0.5, 0)` for the heat problem, with the
/// relative tolerance each reproduction must meet.
pub const REFERENCE_ERRORS: [(usize, f64, f64); 5] = [
    (4, 0.00063440, 0.20),
    (6, 0.00022136, 0.20),
    (8, 0.00004745, 0.20),
    (12, 0.76362937e-6, 0.30),
    (16, 0.43045006e-8, 0.50),
];

/// Relative tolerance on `|e(-1)| = α |e(1)|`.
pub const ANTISYMMETRY_TOL: f64 = 0.01;

pub fn reference_error(n: usize) -> Option<(f64, f64)> {
    REFERENCE_ERRORS
        .iter()
        .find(|r| r.0 == n)
        .map(|&(_, value, tol)| (value, tol))
}

/// Process exit status of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    AcceptanceFailure = 1,
    ConfigError = 2,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

/// One CSV row of solution output.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionRow {
    pub n: usize,
    pub k: usize,
    pub t: f64,
    pub approx: f64,
    pub exact: Option<f64>,
    pub abs_error: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SolveRun {
    pub rows: Vec<SolutionRow>,
    pub reports: Vec<SolveReport>,
}

impl SolveRun {
    pub fn csv(&self) -> String {
        solution_csv(&self.rows)
    }
}

fn sci(v: f64) -> String {
    format!("{v:.7e}")
}

pub fn solution_csv(rows: &[SolutionRow]) -> String {
    let mut out = String::from(SOLUTION_HEADER);
    out.push('\n');
    for r in rows {
        let opt = |v: Option<f64>| v.map(sci).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.n,
            r.k,
            sci(r.t),
            sci(r.approx),
            opt(r.exact),
            opt(r.abs_error)
        );
    }
    out
}

/// `Σ_m c_m sin(mπx)`.
pub fn sine_series(coeffs: &State, x: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| c * ((i + 1) as f64 * PI * x).sin())
        .sum()
}

/// Solves for every degree in `spec.n` and tabulates nodal values.
///
/// Diagonal problems are read as sine-series coefficients and summed at
/// `spec.x`. Dense problems report max-norms: `approx = ‖x_k‖∞`,
/// `exact = ‖v(t_k)‖∞` and `abs_error = ‖x_k - v(t_k)‖∞`.
pub fn run_solve(spec: &RunSpec) -> Result<SolveRun> {
    let problem = build(spec)?;
    let opts = spec.solve_options();
    let diagonal = spec.problem.is_diagonal();
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for &n in &spec.n {
        let report = solve_nonlocal_with(&problem, n, &opts)?;
        for (k, (&t, x)) in report
            .mesh
            .nodes()
            .iter()
            .zip(&report.nodal_values)
            .enumerate()
        {
            let exact = problem.exact.as_ref().map(|e| e(t));
            let (approx, exact, abs_error) = if diagonal {
                let a = sine_series(x, spec.x);
                let e = exact.map(|e| sine_series(&e, spec.x));
                (a, e, e.map(|e| (a - e).abs()))
            } else {
                let err = exact.as_ref().map(|e| (x - e).amax());
                (x.amax(), exact.map(|e| e.amax()), err)
            };
            rows.push(SolutionRow {
                n,
                k,
                t,
                approx,
                exact,
                abs_error,
            });
        }
        reports.push(report);
    }
    Ok(SolveRun { rows, reports })
}

fn build(spec: &RunSpec) -> Result<NonlocalProblem> {
    spec.problem
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))
}

/// Outcome of the table checks for one degree.
#[derive(Debug, Clone, PartialEq)]
pub struct TableCheck {
    pub n: usize,
    pub error_at_zero: f64,
    pub reference: Option<(f64, f64)>,
    pub error_at_start: f64,
    pub error_at_end: f64,
    pub alpha: f64,
}

impl TableCheck {
    pub fn reference_ok(&self) -> bool {
        match self.reference {
            Some((value, tol)) => (self.error_at_zero - value).abs() <= tol * value,
            None => true,
        }
    }

    /// `|e(-1) - α e(1)| / (α e(1))`.
    pub fn antisymmetry_deviation(&self) -> f64 {
        let target = self.alpha.abs() * self.error_at_end;
        (self.error_at_start - target).abs() / target
    }

    pub fn antisymmetry_ok(&self) -> bool {
        self.antisymmetry_deviation() <= ANTISYMMETRY_TOL
    }

    pub fn passed(&self) -> bool {
        self.reference_ok() && self.antisymmetry_ok()
    }
}

#[derive(Debug, Clone)]
pub struct TableRun {
    pub run: SolveRun,
    pub checks: Vec<TableCheck>,
}

impl TableRun {
    pub fn csv(&self) -> String {
        self.run.csv()
    }

    pub fn status(&self) -> ExitStatus {
        if self.checks.iter().all(TableCheck::passed) {
            ExitStatus::Success
        } else {
            ExitStatus::AcceptanceFailure
        }
    }

    /// Human-readable check summary, one line per degree.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let reference = match c.reference {
                Some((v, tol)) => format!("reference {v:.7e} (±{:.0}%)", tol * 100.0),
                None => "no reference".into(),
            };
            let _ = writeln!(
                out,
                "n={:<2} e(0)={:.7e} {} antisymmetry {:.2e} {}",
                c.n,
                c.error_at_zero,
                reference,
                c.antisymmetry_deviation(),
                if c.passed() { "ok" } else { "FAILED" }
            );
        }
        out
    }
}

/// Solves the heat problem on `spec.n` (the table degrees for
/// [`RunSpec::builtin_heat`]) and checks the error at `t = 0` against
/// [`REFERENCE_ERRORS`] and the endpoint relation `|e(-1)| = α|e(1)|`.
pub fn run_reproduce_tables(spec: &RunSpec) -> Result<TableRun> {
    if spec.problem.kind() != ProblemKind::BuiltinHeat {
        return Err(Error::InvalidArgument(
            "table reproduction requires the builtin-heat problem".into(),
        ));
    }
    if let Some(&n) = spec.n.iter().find(|&&n| n % 2 == 1) {
        return Err(Error::InvalidArgument(format!(
            "table reproduction needs even degrees so that t = 0 is a node, got {n}"
        )));
    }
    let run = run_solve(spec)?;
    let alpha = build(spec)?.alpha;
    let checks = spec
        .n
        .iter()
        .map(|&n| {
            let rows: Vec<&SolutionRow> = run.rows.iter().filter(|r| r.n == n).collect();
            let err = |k: usize| {
                rows[k]
                    .abs_error
                    .expect("heat problem has an exact solution")
            };
            TableCheck {
                n,
                error_at_zero: err(n / 2),
                reference: reference_error(n),
                error_at_start: err(0),
                error_at_end: err(n),
                alpha,
            }
        })
        .collect();
    Ok(TableRun { run, checks })
}

/// The table run with the default degrees `{4, 6, 8, 12, 16}`.
pub fn reproduce_tables() -> Result<TableRun> {
    let spec = RunSpec::builtin_heat();
    debug_assert_eq!(spec.n, TABLE_DEGREES);
    run_reproduce_tables(&spec)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    pub max_nodal_error: f64,
    pub iterations: usize,
    pub contraction_q: f64,
    pub wallclock_s: f64,
}

pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut out = String::from(CONVERGENCE_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.n,
            sci(r.max_nodal_error),
            r.iterations,
            sci(r.contraction_q),
            sci(r.wallclock_s)
        );
    }
    out
}

/// Max nodal error per degree, measured against the exact solution when the
/// problem has one and against [`nonlocal_oracle`] otherwise.
pub fn run_convergence(spec: &RunSpec) -> Result<Vec<ConvergenceRow>> {
    let problem = build(spec)?;
    let opts = spec.solve_options();
    let mut rows = Vec::with_capacity(spec.n.len());
    for &n in &spec.n {
        let report = solve_nonlocal_with(&problem, n, &opts)?;
        let max_nodal_error = match report.max_nodal_error() {
            Some(e) => e,
            None => {
                let oracle = nonlocal_oracle(&problem, report.mesh.nodes(), DEFAULT_PANELS)?;
                oracle
                    .values
                    .iter()
                    .zip(&report.nodal_values)
                    .map(|(o, x)| (x - o).amax())
                    .fold(0.0, f64::max)
            }
        };
        rows.push(ConvergenceRow {
            n,
            max_nodal_error,
            iterations: report.iterations,
            contraction_q: report.contraction_q,
            wallclock_s: report.elapsed_seconds,
        });
    }
    Ok(rows)
}
