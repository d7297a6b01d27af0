//! Line-oriented `section.key = value` run configuration.

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use pbfree::oracle::Axis;
use pbfree::solver::ContinuationSchedule;
use pbfree::{Boundary, Grid2D, Params};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Subcommand {
    Solve,
    Mpass,
    Continue,
    Sweep,
    Eig,
    Oracle,
    Check,
}

impl Subcommand {
    pub fn as_str(self) -> &'static str {
        match self {
            Subcommand::Solve => "solve",
            Subcommand::Mpass => "mpass",
            Subcommand::Continue => "continue",
            Subcommand::Sweep => "sweep",
            Subcommand::Eig => "eig",
            Subcommand::Oracle => "oracle",
            Subcommand::Check => "check",
        }
    }
}

impl FromStr for Subcommand {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "solve" => Subcommand::Solve,
            "mpass" => Subcommand::Mpass,
            "continue" => Subcommand::Continue,
            "sweep" => Subcommand::Sweep,
            "eig" => Subcommand::Eig,
            "oracle" => Subcommand::Oracle,
            "check" => Subcommand::Check,
            _ => return Err(format!("unknown subcommand `{s}`")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Newton on the residual; finds saddles as well as minima.
    Critical,
    Minimize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Report,
    Csv,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub boundary: Boundary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub method: Method,
    /// Amplitude of the sine bump used as initial guess.
    pub init_amplitude: f64,
    /// Amplitude of a seeded random perturbation added to the guess.
    pub perturb: f64,
    pub far_amplitude: f64,
    pub path_nodes: usize,
    pub morse: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    pub bracket: Option<(f64, f64)>,
    pub tol: f64,
    pub compare: Option<PathBuf>,
    pub axis: Axis,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub subcommand: Option<Subcommand>,
    pub grid: GridConfig,
    pub params: Params,
    pub solver: SolverConfig,
    pub schedule: ContinuationSchedule<f64>,
    pub lambdas: Vec<f64>,
    pub oracle: OracleConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `section.key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}` (first set on line {first})")]
    Duplicate { line: usize, first: usize, key: String },
    #[error("line {line}: bad value for `{key}`: {msg}")]
    Value { line: usize, key: String, msg: String },
    #[error("{}{msg}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Constraint { line: Option<usize>, msg: String },
    #[error("cannot read config: {0}")]
    Read(String),
}

const KEYS: &[&str] = &[
    "run.subcommand",
    "grid.nx",
    "grid.ny",
    "grid.lx",
    "grid.ly",
    "grid.boundary",
    "params.p",
    "params.q",
    "params.lambda",
    "params.alpha",
    "params.eps",
    "params.subcells",
    "solver.tol",
    "solver.max_iter",
    "solver.seed",
    "solver.method",
    "solver.init_amplitude",
    "solver.perturb",
    "solver.far_amplitude",
    "solver.path_nodes",
    "solver.morse",
    "schedule.alpha0",
    "schedule.factor",
    "schedule.steps",
    "sweep.lambdas",
    "oracle.umax_lo",
    "oracle.umax_hi",
    "oracle.tol",
    "oracle.compare",
    "oracle.axis",
    "output.directory",
    "output.formats",
];

struct Entries {
    map: HashMap<String, (String, usize)>,
}

impl Entries {
    fn line(&self, key: &str) -> Option<usize> {
        self.map.get(key).map(|(_, l)| *l)
    }

    fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.map.get(key) {
            None => Ok(default),
            Some((v, line)) => v.parse::<T>().map_err(|e| ConfigError::Value {
                line: *line,
                key: key.to_string(),
                msg: e.to_string(),
            }),
        }
    }

    fn with<T>(&self, key: &str, default: T, f: impl Fn(&str) -> Result<T, String>) -> Result<T, ConfigError> {
        match self.map.get(key) {
            None => Ok(default),
            Some((v, line)) => f(v).map_err(|msg| ConfigError::Value { line: *line, key: key.to_string(), msg }),
        }
    }
}

fn parse_list(v: &str) -> Result<Vec<f64>, String> {
    v.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| format!("`{}`: {e}", s.trim())))
        .collect()
}

fn parse_real(v: &str) -> Result<f64, String> {
    let x: f64 = v.parse().map_err(|e: std::num::ParseFloatError| e.to_string())?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err("must be finite".into())
    }
}

/// Parses and validates a configuration. Keys that are absent take their
/// defaults; every constraint of the solver types is checked here.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut map: HashMap<String, (String, usize)> = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let syntax = || ConfigError::Syntax { line, text: raw.trim().to_string() };
        let (key, value) = body.split_once('=').ok_or_else(syntax)?;
        let (key, value) = (key.trim(), value.trim());
        let (section, name) = key.split_once('.').ok_or_else(syntax)?;
        if section.is_empty() || name.is_empty() || value.is_empty() {
            return Err(syntax());
        }
        if !KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey { line, key: key.to_string() });
        }
        if let Some((_, first)) = map.get(key) {
            return Err(ConfigError::Duplicate { line, first: *first, key: key.to_string() });
        }
        map.insert(key.to_string(), (value.to_string(), line));
    }
    build(&Entries { map })
}

fn build(e: &Entries) -> Result<RunConfig, ConfigError> {
    let subcommand = e.with("run.subcommand", None, |v| v.parse().map(Some))?;
    let boundary = e.with("grid.boundary", Boundary::Dirichlet, |v| match v {
        "dirichlet" => Ok(Boundary::Dirichlet),
        "periodic_y" => Ok(Boundary::PeriodicY),
        _ => Err("expected `dirichlet` or `periodic_y`".into()),
    })?;
    let grid = GridConfig {
        nx: e.get("grid.nx", 65)?,
        ny: e.get("grid.ny", 65)?,
        lx: e.with("grid.lx", 1.0, parse_real)?,
        ly: e.with("grid.ly", 1.0, parse_real)?,
        boundary,
    };
    Grid2D::with_boundary(grid.nx, grid.ny, grid.lx, grid.ly, grid.boundary).map_err(|err| ConfigError::Constraint {
        line: e.line("grid.nx").or(e.line("grid.lx")),
        msg: err.to_string(),
    })?;

    let p = e.with("params.p", 2.0, parse_real)?;
    let q = e.with("params.q", 3.0, parse_real)?;
    let mut params = Params::new(2.0, 3.0, 0.0, 0.05).expect("defaults are valid");
    params.p = p;
    params.q = q;
    params.lambda = e.with("params.lambda", 0.0, parse_real)?;
    params.alpha = e.with("params.alpha", 0.05, parse_real)?;
    params.eps = e.with("params.eps", params.eps, parse_real)?;
    params.subcells = e.get("params.subcells", params.subcells)?;
    if let Err(err) = params.validate() {
        let line = match err {
            pbfree::ParamError::PTooSmall(_) | pbfree::ParamError::DegenerateWeight(_) => e.line("params.p"),
            pbfree::ParamError::ExponentOrder { .. } | pbfree::ParamError::Supercritical { .. } => {
                e.line("params.q").or(e.line("params.p"))
            }
            pbfree::ParamError::Lambda(_) => e.line("params.lambda"),
            pbfree::ParamError::Alpha(_) => e.line("params.alpha"),
            pbfree::ParamError::Eps(_) => e.line("params.eps"),
            pbfree::ParamError::Subcells => e.line("params.subcells"),
        };
        return Err(ConfigError::Constraint { line, msg: err.to_string() });
    }

    let method = e.with("solver.method", Method::Critical, |v| match v {
        "critical" => Ok(Method::Critical),
        "minimize" => Ok(Method::Minimize),
        _ => Err("expected `critical` or `minimize`".into()),
    })?;
    let morse = e.get("solver.morse", true)?;
    let solver = SolverConfig {
        tol: e.with("solver.tol", 1e-8, parse_real)?,
        max_iter: e.get("solver.max_iter", 100)?,
        seed: e.get("solver.seed", 0)?,
        method,
        init_amplitude: e.with("solver.init_amplitude", 2.0, parse_real)?,
        perturb: e.with("solver.perturb", 0.0, parse_real)?,
        far_amplitude: e.with("solver.far_amplitude", 4.0, parse_real)?,
        path_nodes: e.get("solver.path_nodes", 15)?,
        morse,
    };
    let bad = |key: &str, msg: &str| ConfigError::Constraint { line: e.line(key), msg: format!("{key} {msg}") };
    if !(solver.tol > 0.0) {
        return Err(bad("solver.tol", "must be positive"));
    }
    if solver.max_iter == 0 {
        return Err(bad("solver.max_iter", "must be at least 1"));
    }
    if solver.path_nodes < 3 {
        return Err(bad("solver.path_nodes", "must be at least 3"));
    }
    if solver.perturb < 0.0 {
        return Err(bad("solver.perturb", "must be nonnegative"));
    }

    let mut schedule = ContinuationSchedule::new(
        e.with("schedule.alpha0", 0.2, parse_real)?,
        e.with("schedule.factor", 0.5, parse_real)?,
        e.get("schedule.steps", 5)?,
        solver.tol,
    );
    schedule.max_iter = solver.max_iter;
    schedule.validate().map_err(|err| ConfigError::Constraint {
        line: e.line("schedule.alpha0").or(e.line("schedule.factor")).or(e.line("schedule.steps")),
        msg: err.to_string(),
    })?;

    let lambdas = e.with("sweep.lambdas", vec![20.0, 40.0, 60.0], parse_list)?;
    if lambdas.is_empty() || lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(bad("sweep.lambdas", "must be a list of finite nonnegative values"));
    }

    let lo = e.with("oracle.umax_lo", f64::NAN, parse_real)?;
    let hi = e.with("oracle.umax_hi", f64::NAN, parse_real)?;
    let bracket = match (lo.is_nan(), hi.is_nan()) {
        (true, true) => None,
        (false, false) if 1.0 < lo && lo < hi => Some((lo, hi)),
        (false, false) => return Err(bad("oracle.umax_lo", "and oracle.umax_hi must satisfy 1 < lo < hi")),
        _ => return Err(bad("oracle.umax_lo", "and oracle.umax_hi must be given together")),
    };
    let axis = e.with("oracle.axis", Axis::X, |v| match v {
        "x" => Ok(Axis::X),
        "y" => Ok(Axis::Y),
        _ => Err("expected `x` or `y`".into()),
    })?;
    let oracle = OracleConfig {
        bracket,
        tol: e.with("oracle.tol", 1e-10, parse_real)?,
        compare: e.with("oracle.compare", None, |v| Ok(Some(PathBuf::from(v))))?,
        axis,
    };
    if !(oracle.tol > 0.0) {
        return Err(bad("oracle.tol", "must be positive"));
    }

    let formats = e.with("output.formats", vec![Format::Report, Format::Csv], |v| {
        v.split(',')
            .map(|s| match s.trim() {
                "report" => Ok(Format::Report),
                "csv" => Ok(Format::Csv),
                other => Err(format!("unknown format `{other}`")),
            })
            .collect()
    })?;
    let output = OutputConfig { directory: e.with("output.directory", PathBuf::from("out"), |v| Ok(v.into()))?, formats };

    Ok(RunConfig { subcommand, grid, params, solver, schedule, lambdas, oracle, output })
}

impl RunConfig {
    pub fn grid(&self) -> Grid2D<f64> {
        let g = &self.grid;
        Grid2D::with_boundary(g.nx, g.ny, g.lx, g.ly, g.boundary).expect("validated at parse time")
    }

    pub fn wants(&self, f: Format) -> bool {
        self.output.formats.contains(&f)
    }

    /// Effective configuration as `(key, value)` pairs in a fixed order.
    pub fn echo(&self) -> Vec<(String, String)> {
        let fmt_list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        let boundary = match self.grid.boundary {
            Boundary::Dirichlet => "dirichlet",
            Boundary::PeriodicY => "periodic_y",
        };
        let method = match self.solver.method {
            Method::Critical => "critical",
            Method::Minimize => "minimize",
        };
        let formats: Vec<&str> = self
            .output
            .formats
            .iter()
            .map(|f| match f {
                Format::Report => "report",
                Format::Csv => "csv",
            })
            .collect();
        let (lo, hi) = self.oracle.bracket.map_or(("auto".to_string(), "auto".to_string()), |(a, b)| (a.to_string(), b.to_string()));
        let mut out: Vec<(&str, String)> = vec![
            ("run.subcommand", self.subcommand.map_or("none", |s| s.as_str()).to_string()),
            ("grid.nx", self.grid.nx.to_string()),
            ("grid.ny", self.grid.ny.to_string()),
            ("grid.lx", self.grid.lx.to_string()),
            ("grid.ly", self.grid.ly.to_string()),
            ("grid.boundary", boundary.to_string()),
            ("params.p", self.params.p.to_string()),
            ("params.q", self.params.q.to_string()),
            ("params.lambda", self.params.lambda.to_string()),
            ("params.alpha", self.params.alpha.to_string()),
            ("params.eps", self.params.eps.to_string()),
            ("params.subcells", self.params.subcells.to_string()),
            ("solver.tol", self.solver.tol.to_string()),
            ("solver.max_iter", self.solver.max_iter.to_string()),
            ("solver.seed", self.solver.seed.to_string()),
            ("solver.method", method.to_string()),
            ("solver.init_amplitude", self.solver.init_amplitude.to_string()),
            ("solver.perturb", self.solver.perturb.to_string()),
            ("solver.far_amplitude", self.solver.far_amplitude.to_string()),
            ("solver.path_nodes", self.solver.path_nodes.to_string()),
            ("solver.morse", self.solver.morse.to_string()),
            ("schedule.alpha0", self.schedule.alpha0.to_string()),
            ("schedule.factor", self.schedule.factor.to_string()),
            ("schedule.steps", self.schedule.steps.to_string()),
            ("sweep.lambdas", fmt_list(&self.lambdas)),
            ("oracle.umax_lo", lo),
            ("oracle.umax_hi", hi),
            ("oracle.tol", self.oracle.tol.to_string()),
            ("oracle.axis", if self.oracle.axis == Axis::X { "x" } else { "y" }.to_string()),
            ("output.formats", formats.join(", ")),
        ];
        if let Some(p) = &self.oracle.compare {
            out.push(("oracle.compare", p.display().to_string()));
        }
        out.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}
