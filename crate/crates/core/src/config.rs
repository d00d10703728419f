//! Run configuration in TOML.
//!
//! ```toml
//! [problem]
//! kind = "diagonal-custom"        # builtin-heat | diagonal-custom | dense-custom
//! modes = 3                       # diagonal-custom
//! lambda = "m^2*pi^2 + 1 + t"     # eigenvalue of mode m at time t
//! lambda_degree = 1               # optional; detected from `lambda` when omitted
//! forcing = "exp(-m*t)"           # one expression in (m, t), or one per mode
//! phi = "1/m"                     # one expression in m, or one per mode
//! alpha = 0.5
//! exact = "..."                   # optional, same shape as `forcing`
//! smooth_forcing = true           # optional
//!
//! # dense-custom instead takes
//! # dim = 2
//! # matrix = [["2 + t", "0.1"], ["0.1", "3"]]
//! # symmetric = true              # optional; eigendecomposition instead of Padé
//! # forcing = ["1", "t"]          # exactly `dim` expressions in t
//! # phi = ["1", "0"]
//!
//! [solver]
//! n = [4, 8, 16]                  # or a single integer
//! method = "fixed-point"          # or "direct"
//! tol = 1e-13
//! max_iter = 200
//! quad_order = 48                 # optional
//!
//! [output]
//! path = "out.csv"                # optional; stdout when absent
//! x = 0.5                         # spatial point for sine-series output
//! ```
//!
//! `builtin-heat` takes no further problem keys. Unknown keys are rejected.

use std::path::PathBuf;
use std::sync::Arc;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::expr::{parse_expr, Bindings, Expr, Var};
use crate::operator::{DenseFamily, DiagonalFamily, NonlocalProblem};
use crate::solver::{Method, SolveOptions};
use crate::State;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid TOML: {0}")]
    Syntax(String),
    #[error("{key}: missing required key")]
    Missing { key: String },
    #[error("{key}: expected {expected}")]
    Type { key: String, expected: &'static str },
    #[error("{key}: {message}")]
    Invalid { key: String, message: String },
    #[error("{key}: {source}")]
    Expression {
        key: String,
        source: crate::expr::ParseError,
    },
    #[error("{key}: unknown key")]
    Unknown { key: String },
}

impl ConfigError {
    /// Dotted path of the offending key, if the error concerns one.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::Syntax(_) => None,
            ConfigError::Missing { key }
            | ConfigError::Type { key, .. }
            | ConfigError::Invalid { key, .. }
            | ConfigError::Expression { key, .. }
            | ConfigError::Unknown { key } => Some(key),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    BuiltinHeat,
    DiagonalCustom,
    DenseCustom,
}

/// A parsed expression together with its source text.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprField {
    pub source: String,
    pub expr: Expr,
}

impl ExprField {
    fn eval_or_nan(&self, b: &Bindings) -> f64 {
        self.expr.eval(b).unwrap_or(f64::NAN)
    }
}

/// Either one expression shared by every mode (in terms of `m`) or one per
/// mode/component.
#[derive(Debug, Clone, PartialEq)]
pub enum ExprList {
    Shared(ExprField),
    Each(Vec<ExprField>),
}

impl ExprList {
    fn eval(&self, index: usize, b: Bindings) -> f64 {
        match self {
            ExprList::Shared(e) => e.eval_or_nan(&b),
            ExprList::Each(list) => list[index].eval_or_nan(&b),
        }
    }

    fn len_matches(&self, len: usize) -> bool {
        match self {
            ExprList::Shared(_) => true,
            ExprList::Each(list) => list.len() == len,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSpec {
    BuiltinHeat,
    Diagonal {
        modes: usize,
        lambda: ExprField,
        lambda_degree: Option<usize>,
        forcing: ExprList,
        phi: ExprList,
        alpha: f64,
        exact: Option<ExprList>,
        smooth_forcing: bool,
    },
    Dense {
        dim: usize,
        matrix: Vec<Vec<ExprField>>,
        symmetric: bool,
        forcing: Vec<ExprField>,
        phi: Vec<ExprField>,
        alpha: f64,
        exact: Option<Vec<ExprField>>,
        smooth_forcing: bool,
    },
}

impl ProblemSpec {
    pub fn kind(&self) -> ProblemKind {
        match self {
            ProblemSpec::BuiltinHeat => ProblemKind::BuiltinHeat,
            ProblemSpec::Diagonal { .. } => ProblemKind::DiagonalCustom,
            ProblemSpec::Dense { .. } => ProblemKind::DenseCustom,
        }
    }

    pub fn is_diagonal(&self) -> bool {
        self.kind() != ProblemKind::DenseCustom
    }

    /// Builds the operator family, forcing and nonlocal data.
    pub fn build(&self) -> Result<NonlocalProblem, ConfigError> {
        let build_err = |e: crate::Error| ConfigError::Invalid {
            key: "problem".into(),
            message: e.to_string(),
        };
        match self {
            ProblemSpec::BuiltinHeat => Ok(NonlocalProblem::heat_example()),
            ProblemSpec::Diagonal {
                modes,
                lambda,
                lambda_degree,
                forcing,
                phi,
                alpha,
                exact,
                smooth_forcing,
            } => {
                let modes = *modes;
                let lam = Arc::new(lambda.clone());
                let mut family = DiagonalFamily::new(modes, move |m, t| {
                    lam.eval_or_nan(&Bindings::mt(m as f64, t))
                });
                let degree = lambda_degree.or_else(|| lambda.expr.polynomial_degree(Var::T));
                if let Some(d) = degree {
                    family = family.with_polynomial_degree(d);
                }
                let mode_vector = move |list: &ExprList, t: f64| {
                    State::from_fn(modes, |i, _| list.eval(i, Bindings::mt((i + 1) as f64, t)))
                };
                let phi_vec = mode_vector(phi, 0.0);
                let forcing = forcing.clone();
                let mut problem = NonlocalProblem::new(
                    family,
                    move |t| mode_vector(&forcing, t),
                    *alpha,
                    phi_vec,
                )
                .map_err(build_err)?
                .with_smooth_forcing(*smooth_forcing);
                if let Some(exact) = exact.clone() {
                    problem = problem.with_exact(move |t| mode_vector(&exact, t));
                }
                Ok(problem)
            }
            ProblemSpec::Dense {
                dim,
                matrix,
                symmetric,
                forcing,
                phi,
                alpha,
                exact,
                smooth_forcing,
            } => {
                let dim = *dim;
                let matrix = matrix.clone();
                let family = DenseFamily::new(dim, *symmetric, move |t| {
                    let b = Bindings::t(t);
                    DMatrix::from_fn(dim, dim, |i, j| matrix[i][j].eval_or_nan(&b))
                });
                let component_vector = move |list: &[ExprField], t: f64| {
                    State::from_iterator(dim, list.iter().map(|e| e.eval_or_nan(&Bindings::t(t))))
                };
                let phi_vec = component_vector(phi, 0.0);
                let forcing = forcing.clone();
                let mut problem = NonlocalProblem::new(
                    family,
                    move |t| component_vector(&forcing, t),
                    *alpha,
                    phi_vec,
                )
                .map_err(build_err)?
                .with_smooth_forcing(*smooth_forcing);
                if let Some(exact) = exact.clone() {
                    problem = problem.with_exact(move |t| component_vector(&exact, t));
                }
                Ok(problem)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub problem: ProblemSpec,
    pub n: Vec<usize>,
    pub method: Method,
    pub tol: f64,
    pub max_iter: usize,
    pub quad_order: Option<usize>,
    pub output: Option<PathBuf>,
    /// Spatial point at which sine-series solutions are summed.
    pub x: f64,
}

/// Degrees used by the table reproduction run.
pub const TABLE_DEGREES: [usize; 5] = [4, 6, 8, 12, 16];

impl RunSpec {
    /// The builtin heat problem on the table degrees.
    pub fn builtin_heat() -> Self {
        let defaults = SolveOptions::default();
        Self {
            problem: ProblemSpec::BuiltinHeat,
            n: TABLE_DEGREES.to_vec(),
            method: defaults.method,
            tol: defaults.tol,
            max_iter: defaults.max_iter,
            quad_order: None,
            output: None,
            x: 0.5,
        }
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            method: self.method,
            tol: self.tol,
            max_iter: self.max_iter,
            quad_order: self.quad_order,
            ..SolveOptions::default()
        }
    }
}

pub fn parse_config(text: &str) -> Result<RunSpec, ConfigError> {
    let root: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigError::Syntax(e.message().to_string()))?;
    check_keys(&root, "", &["problem", "solver", "output"])?;
    let problem_table = root
        .get("problem")
        .ok_or_else(|| missing("problem"))?
        .as_table()
        .ok_or_else(|| type_err("problem", "a table"))?;
    let problem = parse_problem(problem_table)?;

    let mut spec = RunSpec::builtin_heat();
    spec.problem = problem;

    if let Some(solver) = root.get("solver") {
        let solver = solver
            .as_table()
            .ok_or_else(|| type_err("solver", "a table"))?;
        check_keys(
            solver,
            "solver",
            &["n", "method", "tol", "max_iter", "quad_order"],
        )?;
        if let Some(n) = solver.get("n") {
            spec.n = match n {
                toml::Value::Integer(_) => vec![get_usize(n, "solver.n")?],
                toml::Value::Array(items) => items
                    .iter()
                    .enumerate()
                    .map(|(i, v)| get_usize(v, &format!("solver.n[{i}]")))
                    .collect::<Result<_, _>>()?,
                _ => return Err(type_err("solver.n", "an integer or a list of integers")),
            };
            if spec.n.is_empty() {
                return Err(invalid("solver.n", "at least one degree is required"));
            }
            if let Some(bad) = spec.n.iter().find(|&&n| n < 2) {
                return Err(invalid(
                    "solver.n",
                    &format!("degree must be at least 2, got {bad}"),
                ));
            }
        }
        if let Some(m) = solver.get("method") {
            let s = m
                .as_str()
                .ok_or_else(|| type_err("solver.method", "a string"))?;
            spec.method = s
                .parse()
                .map_err(|e: String| invalid("solver.method", &e))?;
        }
        if let Some(tol) = solver.get("tol") {
            spec.tol = get_f64(tol, "solver.tol")?;
            if !(spec.tol > 0.0) {
                return Err(invalid("solver.tol", "must be positive"));
            }
        }
        if let Some(v) = solver.get("max_iter") {
            spec.max_iter = get_usize(v, "solver.max_iter")?;
            if spec.max_iter == 0 {
                return Err(invalid("solver.max_iter", "must be at least 1"));
            }
        }
        if let Some(v) = solver.get("quad_order") {
            spec.quad_order = Some(get_usize(v, "solver.quad_order")?);
        }
    }

    if let Some(output) = root.get("output") {
        let output = output
            .as_table()
            .ok_or_else(|| type_err("output", "a table"))?;
        check_keys(output, "output", &["path", "x"])?;
        if let Some(p) = output.get("path") {
            spec.output = Some(PathBuf::from(
                p.as_str()
                    .ok_or_else(|| type_err("output.path", "a string"))?,
            ));
        }
        if let Some(x) = output.get("x") {
            spec.x = get_f64(x, "output.x")?;
        }
    }
    Ok(spec)
}

fn parse_problem(table: &toml::Table) -> Result<ProblemSpec, ConfigError> {
    let kind = table
        .get("kind")
        .ok_or_else(|| missing("problem.kind"))?
        .as_str()
        .ok_or_else(|| type_err("problem.kind", "a string"))?;
    match kind {
        "builtin-heat" => {
            check_keys(table, "problem", &["kind"])?;
            Ok(ProblemSpec::BuiltinHeat)
        }
        "diagonal-custom" => {
            check_keys(
                table,
                "problem",
                &[
                    "kind",
                    "modes",
                    "lambda",
                    "lambda_degree",
                    "forcing",
                    "phi",
                    "alpha",
                    "exact",
                    "smooth_forcing",
                ],
            )?;
            let modes = get_usize(require(table, "problem", "modes")?, "problem.modes")?;
            if modes == 0 {
                return Err(invalid("problem.modes", "must be at least 1"));
            }
            let lambda = expr_field(require(table, "problem", "lambda")?, "problem.lambda")?;
            let lambda_degree = table
                .get("lambda_degree")
                .map(|v| get_usize(v, "problem.lambda_degree"))
                .transpose()?;
            let list = |key: &str| -> Result<ExprList, ConfigError> {
                let path = format!("problem.{key}");
                let list = expr_list(require(table, "problem", key)?, &path)?;
                if !list.len_matches(modes) {
                    return Err(invalid(
                        &path,
                        &format!("expected {modes} expressions, one per mode"),
                    ));
                }
                Ok(list)
            };
            let forcing = list("forcing")?;
            let phi = list("phi")?;
            let exact = if table.contains_key("exact") {
                Some(list("exact")?)
            } else {
                None
            };
            Ok(ProblemSpec::Diagonal {
                modes,
                lambda,
                lambda_degree,
                forcing,
                phi,
                alpha: get_f64(require(table, "problem", "alpha")?, "problem.alpha")?,
                exact,
                smooth_forcing: get_bool_or(table, "smooth_forcing", true)?,
            })
        }
        "dense-custom" => {
            check_keys(
                table,
                "problem",
                &[
                    "kind",
                    "dim",
                    "matrix",
                    "symmetric",
                    "forcing",
                    "phi",
                    "alpha",
                    "exact",
                    "smooth_forcing",
                ],
            )?;
            let dim = get_usize(require(table, "problem", "dim")?, "problem.dim")?;
            if dim == 0 {
                return Err(invalid("problem.dim", "must be at least 1"));
            }
            let rows = require(table, "problem", "matrix")?
                .as_array()
                .ok_or_else(|| type_err("problem.matrix", "a list of rows"))?;
            if rows.len() != dim {
                return Err(invalid(
                    "problem.matrix",
                    &format!("expected {dim} rows, found {}", rows.len()),
                ));
            }
            let matrix = rows
                .iter()
                .enumerate()
                .map(|(i, row)| {
                    let path = format!("problem.matrix[{i}]");
                    let cells = row
                        .as_array()
                        .ok_or_else(|| type_err(&path, "a list of expressions"))?;
                    if cells.len() != dim {
                        return Err(invalid(
                            &path,
                            &format!("expected {dim} entries, found {}", cells.len()),
                        ));
                    }
                    cells
                        .iter()
                        .enumerate()
                        .map(|(j, c)| expr_field(c, &format!("problem.matrix[{i}][{j}]")))
                        .collect()
                })
                .collect::<Result<Vec<Vec<_>>, _>>()?;
            let vector = |key: &str| -> Result<Vec<ExprField>, ConfigError> {
                let path = format!("problem.{key}");
                let items = require(table, "problem", key)?
                    .as_array()
                    .ok_or_else(|| type_err(&path, "a list of expressions"))?;
                if items.len() != dim {
                    return Err(invalid(
                        &path,
                        &format!("expected {dim} expressions, found {}", items.len()),
                    ));
                }
                items
                    .iter()
                    .enumerate()
                    .map(|(i, v)| expr_field(v, &format!("{path}[{i}]")))
                    .collect()
            };
            let forcing = vector("forcing")?;
            let phi = vector("phi")?;
            let exact = if table.contains_key("exact") {
                Some(vector("exact")?)
            } else {
                None
            };
            Ok(ProblemSpec::Dense {
                dim,
                matrix,
                symmetric: get_bool_or(table, "symmetric", false)?,
                forcing,
                phi,
                alpha: get_f64(require(table, "problem", "alpha")?, "problem.alpha")?,
                exact,
                smooth_forcing: get_bool_or(table, "smooth_forcing", true)?,
            })
        }
        other => Err(invalid(
            "problem.kind",
            &format!(
                "unknown kind '{other}' (expected builtin-heat, diagonal-custom or dense-custom)"
            ),
        )),
    }
}

fn missing(key: &str) -> ConfigError {
    ConfigError::Missing {
        key: key.to_string(),
    }
}

fn type_err(key: &str, expected: &'static str) -> ConfigError {
    ConfigError::Type {
        key: key.to_string(),
        expected,
    }
}

fn invalid(key: &str, message: &str) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        message: message.to_string(),
    }
}

fn check_keys(table: &toml::Table, prefix: &str, allowed: &[&str]) -> Result<(), ConfigError> {
    for key in table.keys() {
        if !allowed.contains(&key.as_str()) {
            let key = if prefix.is_empty() {
                key.clone()
            } else {
                format!("{prefix}.{key}")
            };
            return Err(ConfigError::Unknown { key });
        }
    }
    Ok(())
}

fn require<'a>(
    table: &'a toml::Table,
    prefix: &str,
    key: &str,
) -> Result<&'a toml::Value, ConfigError> {
    table
        .get(key)
        .ok_or_else(|| missing(&format!("{prefix}.{key}")))
}

fn get_f64(v: &toml::Value, key: &str) -> Result<f64, ConfigError> {
    let x = match v {
        toml::Value::Float(f) => *f,
        toml::Value::Integer(i) => *i as f64,
        _ => return Err(type_err(key, "a number")),
    };
    if !x.is_finite() {
        return Err(invalid(key, "must be finite"));
    }
    Ok(x)
}

fn get_usize(v: &toml::Value, key: &str) -> Result<usize, ConfigError> {
    match v {
        toml::Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        toml::Value::Integer(_) => Err(invalid(key, "must be nonnegative")),
        _ => Err(type_err(key, "an integer")),
    }
}

fn get_bool_or(table: &toml::Table, key: &str, default: bool) -> Result<bool, ConfigError> {
    match table.get(key) {
        None => Ok(default),
        Some(v) => v
            .as_bool()
            .ok_or_else(|| type_err(&format!("problem.{key}"), "a boolean")),
    }
}

/// Accepts a string expression or a bare number.
fn expr_field(v: &toml::Value, key: &str) -> Result<ExprField, ConfigError> {
    let source = match v {
        toml::Value::String(s) => s.clone(),
        toml::Value::Float(_) | toml::Value::Integer(_) => {
            let x = get_f64(v, key)?;
            // Bare negative numbers print as "-1", which parses as a negation.
            format!("{x:?}")
        }
        _ => return Err(type_err(key, "an expression string or a number")),
    };
    let expr = parse_expr(&source).map_err(|source| ConfigError::Expression {
        key: key.to_string(),
        source,
    })?;
    Ok(ExprField { source, expr })
}

fn expr_list(v: &toml::Value, key: &str) -> Result<ExprList, ConfigError> {
    match v {
        toml::Value::Array(items) => Ok(ExprList::Each(
            items
                .iter()
                .enumerate()
                .map(|(i, item)| expr_field(item, &format!("{key}[{i}]")))
                .collect::<Result<_, _>>()?,
        )),
        other => Ok(ExprList::Shared(expr_field(other, key)?)),
    }
}
