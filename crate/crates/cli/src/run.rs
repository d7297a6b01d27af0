use std::f64::consts::PI;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use pbfree::diagnostics::{run_checks, seeded_perturbation};
use pbfree::freeboundary::FreeBoundaryReport;
use pbfree::oracle::shoot_slab;
use pbfree::solver::{minimize_smooth_with, ContinuationReport};
use pbfree::*;
use thiserror::Error;

use crate::config::{ConfigError, Format, Method, RunConfig, Subcommand};
use crate::report::Report;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const EXIT_NON_FINITE: i32 = 5;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("non-finite value in report at `{0}`")]
    NonFinite(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => EXIT_CONFIG,
            RunError::Solver(_) => EXIT_SOLVER,
            RunError::Io { .. } => EXIT_IO,
            RunError::NonFinite(_) => EXIT_NON_FINITE,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: Report,
    /// Output files in the order they were written.
    pub files: Vec<PathBuf>,
}

struct Out {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Out {
    fn write(&mut self, name: &str, f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<(), RunError> {
        let path = self.dir.join(name);
        write_file(&path, f)?;
        self.files.push(path);
        Ok(())
    }
}

fn write_file(path: &Path, f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<(), RunError> {
    let io = |source| RunError::Io { path: path.to_path_buf(), source };
    let file = fs::File::create(path).map_err(io)?;
    let mut w = BufWriter::new(file);
    f(&mut w).map_err(io)?;
    w.flush().map_err(io)
}

/// Sine bump of the given amplitude (constant in `y` on periodic grids)
/// plus the configured seeded perturbation.
pub fn initial_guess(cfg: &RunConfig, amplitude: f64) -> Field {
    let g = cfg.grid();
    let (lx, ly) = (g.lx(), g.ly());
    let periodic = g.is_periodic();
    let base = Field::from_fn(g, |x, y| {
        let s = (PI * x / lx).sin();
        amplitude * if periodic { s } else { s * (PI * y / ly).sin() }
    });
    if cfg.solver.perturb > 0.0 {
        base.add_scaled(1.0, &seeded_perturbation(g, cfg.solver.seed, cfg.solver.perturb))
    } else {
        base
    }
}

fn solver_err(e: impl std::fmt::Display) -> RunError {
    RunError::Solver(e.to_string())
}

fn probe_offset(cfg: &RunConfig) -> f64 {
    2.0 * cfg.grid().h_max()
}

fn jump_stats(cfg: &RunConfig, u: &Field, prm: &Params) -> Result<FreeBoundaryReport<f64>, RunError> {
    jump_residual_stats(u, prm, Some(probe_offset(cfg))).map_err(solver_err)
}

/// Executes the configured subcommand, writing artifacts below
/// `cfg.output.directory`. Sweep entries run on up to `jobs` threads.
pub fn run(cfg: &RunConfig, jobs: usize) -> Result<RunOutcome, RunError> {
    let sub = cfg.subcommand.ok_or_else(|| ConfigError::Constraint {
        line: None,
        msg: "no subcommand given (set run.subcommand or pass one on the command line)".into(),
    })?;
    let started = SystemTime::now();
    let clock = Instant::now();
    let dir = cfg.output.directory.clone();
    fs::create_dir_all(&dir).map_err(|source| RunError::Io { path: dir.clone(), source })?;
    let mut out = Out { dir, files: Vec::new() };
    let mut report = Report::new();
    report.put("run", "code_version", env!("CARGO_PKG_VERSION"));
    report.put("run", "subcommand", sub.as_str());
    report.extend("config", cfg.echo());

    let result = match sub {
        Subcommand::Solve => solve(cfg, &mut report, &mut out),
        Subcommand::Mpass => mpass(cfg, &mut report, &mut out),
        Subcommand::Continue => continuation(cfg, &mut report, &mut out),
        Subcommand::Sweep => sweep(cfg, jobs, &mut report, &mut out),
        Subcommand::Eig => eig(cfg, &mut report),
        Subcommand::Oracle => oracle(cfg, &mut report, &mut out),
        Subcommand::Check => check(cfg.solver.seed, &mut report),
    };
    if let Err(e) = &result {
        report.put("run", "error", e.to_string().replace('\n', " "));
    }
    if cfg.wants(Format::Report) {
        let text = report.render();
        out.write("report.txt", |w| w.write_all(text.as_bytes()))?;
    }
    let finished = SystemTime::now();
    let secs = |t: SystemTime| t.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
    let meta = format!(
        "started_unix = {}\nfinished_unix = {}\nelapsed_seconds = {}\njobs = {jobs}\n",
        secs(started),
        secs(finished),
        clock.elapsed().as_secs_f64()
    );
    out.write("metadata.txt", |w| w.write_all(meta.as_bytes()))?;
    result?;
    if let Some(key) = report.first_non_finite() {
        return Err(RunError::NonFinite(key));
    }
    Ok(RunOutcome { report, files: out.files })
}

fn put_solve(report: &mut Report, section: &str, rep: &pbfree::Report) {
    report.put(section, "status", rep.status);
    report.put(section, "iterations", rep.iterations);
    report.put(section, "residual_norm", rep.residual_norm);
    report.put(section, "energy_smooth", rep.energy_smooth);
    report.put(section, "energy_sharp", rep.energy_sharp);
    report.put(section, "umax", rep.u.max_value());
    if let Some(m) = rep.morse_index {
        report.put(section, "morse_index", m);
    }
    if let Some(s) = rep.seed {
        report.put(section, "seed", s);
    }
}

fn finish_solve(cfg: &RunConfig, mut rep: pbfree::Report, section: &str, report: &mut Report, out: &mut Out) -> Result<(), RunError> {
    let prm = &cfg.params;
    rep.seed = Some(cfg.solver.seed);
    if cfg.solver.morse && rep.converged() {
        rep.morse_index = Some(morse_index(&rep.u, prm, 10, cfg.solver.tol).map_err(solver_err)?);
    }
    put_solve(report, section, &rep);
    let fb = jump_stats(cfg, &rep.u, prm)?;
    report.extend("free_boundary", fb.summary());
    if cfg.wants(Format::Csv) {
        out.write("u.csv", |w| rep.u.write_csv(w))?;
        out.write("jump_samples.csv", |w| fb.write_csv(w))?;
    }
    if !rep.converged() {
        return Err(RunError::Solver(format!("{section} ended with status {}", rep.status)));
    }
    Ok(())
}

fn solve(cfg: &RunConfig, report: &mut Report, out: &mut Out) -> Result<(), RunError> {
    let u0 = initial_guess(cfg, cfg.solver.init_amplitude);
    let opts = NewtonOptions::new(cfg.solver.tol, cfg.solver.max_iter);
    let rep = match cfg.solver.method {
        Method::Critical => find_critical_point(&u0, &cfg.params, &opts),
        Method::Minimize => minimize_smooth_with(&u0, &cfg.params, &opts),
    }
    .map_err(solver_err)?;
    finish_solve(cfg, rep, "solve", report, out)
}

fn mpass(cfg: &RunConfig, report: &mut Report, out: &mut Out) -> Result<(), RunError> {
    let far = initial_guess(cfg, cfg.solver.far_amplitude);
    report.put("mpass", "far_energy", smooth_energy(&far, &cfg.params));
    let rep = mountain_pass(&cfg.params, &far, cfg.solver.path_nodes, cfg.solver.tol, cfg.solver.max_iter.max(400))
        .map_err(solver_err)?;
    finish_solve(cfg, rep, "mpass", report, out)
}

fn put_continuation(report: &mut Report, section: &str, rep: &ContinuationReport<f64>) {
    for (j, s) in rep.steps.iter().enumerate() {
        let k = |name: &str| format!("step{j}.{name}");
        report.put(section, k("alpha"), s.alpha);
        report.put(section, k("energy_smooth"), s.energy_smooth);
        report.put(section, k("energy_sharp"), s.energy_sharp);
        report.put(section, k("band_area"), s.band_area);
        report.put(section, k("residual_norm"), s.residual_norm);
        report.put(section, k("max_gradient_norm"), s.max_gradient_norm);
        report.put(section, k("jump_residual_median"), s.jump_residual_median);
        report.put(section, k("jump_samples"), s.jump_samples);
        report.put(section, k("iterations"), s.iterations);
        report.put(section, k("umax"), s.umax);
    }
    let medians: Vec<f64> = rep.steps.iter().map(|s| s.jump_residual_median).collect();
    report.put(section, "jump_median_nonincreasing", medians.windows(2).all(|w| w[1] <= 1.1 * w[0]));
    let grads: Vec<f64> = rep.steps.iter().map(|s| s.max_gradient_norm).collect();
    if let (Some(first), Some(last)) = (grads.first(), grads.last()) {
        if *first > 0.0 {
            report.put(section, "gradient_ratio", last / first);
        }
    }
}

fn continuation(cfg: &RunConfig, report: &mut Report, out: &mut Out) -> Result<(), RunError> {
    let u0 = initial_guess(cfg, cfg.solver.init_amplitude);
    let mut sched = cfg.schedule;
    sched.probe_offset = Some(probe_offset(cfg));
    if cfg.solver.method == Method::Minimize {
        sched.method = pbfree::solver::ContinuationMethod::Minimize;
    }
    let rep = continue_alpha(&u0, &cfg.params, &sched).map_err(solver_err)?;
    put_continuation(report, "continuation", &rep);
    let last = rep.steps.last().expect("schedule has steps");
    let prm = cfg.params.with_alpha(last.alpha).map_err(solver_err)?;
    let fb = jump_stats(cfg, rep.u(), &prm)?;
    report.extend("free_boundary", fb.summary());
    if let Ok(ph) = pharmonic_residual(rep.u(), &prm, 4.0 * cfg.grid().h_max()) {
        report.put("pharmonic", "sup_residual", ph.sup_residual);
        report.put("pharmonic", "min_signed", ph.min_signed);
        report.put("pharmonic", "far_nodes", ph.far_nodes);
    }
    if cfg.wants(Format::Csv) {
        out.write("continuation.csv", |w| rep.write_csv(w))?;
        out.write("u.csv", |w| rep.u().write_csv(w))?;
        out.write("jump_samples.csv", |w| fb.write_csv(w))?;
    }
    Ok(())
}

fn eig(cfg: &RunConfig, report: &mut Report) -> Result<(), RunError> {
    let l1 = first_eigenvalue(cfg.params.p, &cfg.grid(), cfg.solver.tol).map_err(solver_err)?;
    report.put("eig", "lambda_1", l1);
    report.put("eig", "lambda_over_lambda_1", cfg.params.lambda / l1);
    Ok(())
}

/// Bracket from the config, or the first sign change of the closure on a
/// scan of `[1.001, 20]`.
fn oracle_bracket(cfg: &RunConfig, prm: &Params) -> Result<Option<(f64, f64)>, OracleError> {
    if let Some(b) = cfg.oracle.bracket {
        return Ok(Some(b));
    }
    if prm.lambda == 0.0 {
        return Ok(Some((1.001, 20.0)));
    }
    Ok(slab_brackets(prm, 1.001, 20.0, 400)?.into_iter().next())
}

fn oracle(cfg: &RunConfig, report: &mut Report, out: &mut Out) -> Result<(), RunError> {
    let prm = &cfg.params;
    let bracket = oracle_bracket(cfg, prm)
        .map_err(solver_err)?
        .ok_or_else(|| RunError::Solver("no sign change of the closure residual on [1.001, 20]".into()))?;
    let sol = shoot_slab(prm, bracket, cfg.oracle.tol).map_err(solver_err)?;
    let r = sol.residuals();
    report.put("oracle", "umax", sol.umax);
    report.put("oracle", "interface", sol.interface);
    report.put("oracle", "slope_plus", sol.slope_plus);
    report.put("oracle", "slope_minus", sol.slope_minus);
    report.put("oracle", "ode_residual", r.ode);
    report.put("oracle", "jump_residual", r.jump);
    report.put("oracle", "closure_residual", r.closure);
    if let Some(path) = &cfg.oracle.compare {
        let file = fs::File::open(path).map_err(|source| RunError::Io { path: path.clone(), source })?;
        let u = Field::read_csv(BufReader::new(file)).map_err(|e| match e {
            FieldIoError::Io(source) => RunError::Io { path: path.clone(), source },
            other => RunError::Solver(format!("{}: {other}", path.display())),
        })?;
        let c = compare_to_oracle(&u, &sol, cfg.oracle.axis).map_err(solver_err)?;
        report.put("comparison", "sup_error", c.sup_error);
        report.put("comparison", "l2_error", c.l2_error);
        report.put("comparison", "interface_error", c.interface_error);
        report.put("comparison", "samples", c.samples);
    }
    if cfg.wants(Format::Csv) {
        out.write("oracle_profile.csv", |w| sol.write_csv(w, cfg.grid.nx))?;
    }
    Ok(())
}

fn check(seed: u64, report: &mut Report) -> Result<(), RunError> {
    let results = run_checks(seed);
    let passed = results.iter().filter(|c| c.passed).count();
    for c in &results {
        report.put("check", format!("{}.value", c.name), c.value);
        report.put("check", format!("{}.threshold", c.name), c.threshold);
        report.put("check", format!("{}.passed", c.name), c.passed);
    }
    report.put("check", "passed", passed);
    report.put("check", "failed", results.len() - passed);
    if passed == results.len() {
        Ok(())
    } else {
        Err(RunError::Solver(format!("{} of {} checks failed", results.len() - passed, results.len())))
    }
}

const SWEEP_HEADER: &str =
    "lambda,status,energy_smooth,umax,jump_residual_median,max_gradient_norm,oracle_status,oracle_umax,oracle_interface,sup_error,interface_error";

/// Sweep table row as (column, value) pairs plus the solver error of a
/// failed entry.
type SweepRow = (Vec<(String, String)>, Option<String>);

/// One row of the sweep table; columns follow [`SWEEP_HEADER`].
fn sweep_entry(cfg: &RunConfig, lambda: f64) -> SweepRow {
    let na = || "na".to_string();
    let mut row: Vec<(String, String)> = vec![("lambda".into(), lambda.to_string())];
    let mut error = None;
    let outcome = cfg.params.with_lambda(lambda).map_err(solver_err).and_then(|prm| {
        let mut sched = cfg.schedule;
        sched.probe_offset = Some(probe_offset(cfg));
        let rep = continue_alpha(&initial_guess(cfg, cfg.solver.init_amplitude), &prm, &sched).map_err(solver_err)?;
        Ok((prm, rep))
    });
    let field = match outcome {
        Ok((prm, rep)) => {
            let s = *rep.steps.last().expect("schedule has steps");
            row.push(("status".into(), "converged".into()));
            row.push(("energy_smooth".into(), s.energy_smooth.to_string()));
            row.push(("umax".into(), s.umax.to_string()));
            row.push(("jump_residual_median".into(), s.jump_residual_median.to_string()));
            row.push(("max_gradient_norm".into(), s.max_gradient_norm.to_string()));
            Some((prm, rep.u().clone()))
        }
        Err(e) => {
            error = Some(e.to_string());
            row.push(("status".into(), "failed".into()));
            for k in ["energy_smooth", "umax", "jump_residual_median", "max_gradient_norm"] {
                row.push((k.into(), na()));
            }
            None
        }
    };
    let mut oracle_cols = vec![na(), na(), na(), na(), na()];
    oracle_cols[0] = "no_solution".into();
    if let Some((prm, u)) = &field {
        if let Ok(Some(b)) = oracle_bracket(cfg, prm) {
            if let Ok(sol) = shoot_slab(prm, b, cfg.oracle.tol) {
                oracle_cols[0] = "solved".into();
                oracle_cols[1] = sol.umax.to_string();
                oracle_cols[2] = sol.interface.to_string();
                if let Ok(c) = compare_to_oracle(u, &sol, cfg.oracle.axis) {
                    oracle_cols[3] = c.sup_error.to_string();
                    oracle_cols[4] = c.interface_error.to_string();
                }
            }
        }
    }
    for (k, v) in ["oracle_status", "oracle_umax", "oracle_interface", "sup_error", "interface_error"].iter().zip(oracle_cols) {
        row.push((k.to_string(), v));
    }
    (row, error)
}

fn sweep(cfg: &RunConfig, jobs: usize, report: &mut Report, out: &mut Out) -> Result<(), RunError> {
    let n = cfg.lambdas.len();
    let entry_dir = out.dir.join("sweep");
    if cfg.wants(Format::Csv) {
        fs::create_dir_all(&entry_dir).map_err(|source| RunError::Io { path: entry_dir.clone(), source })?;
    }
    let next = AtomicUsize::new(0);
    let rows: Mutex<Vec<Option<SweepRow>>> = Mutex::new(vec![None; n]);
    let io_error: Mutex<Option<RunError>> = Mutex::new(None);
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, n.max(1)) {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                if k >= n {
                    break;
                }
                let (row, error) = sweep_entry(cfg, cfg.lambdas[k]);
                if cfg.wants(Format::Csv) {
                    let line = row.iter().map(|(_, v)| v.as_str()).collect::<Vec<_>>().join(",");
                    let path = entry_dir.join(format!("entry_{k:03}.csv"));
                    if let Err(e) = write_file(&path, |w| writeln!(w, "{SWEEP_HEADER}\n{line}")) {
                        io_error.lock().expect("lock").get_or_insert(e);
                    }
                }
                rows.lock().expect("lock")[k] = Some((row, error));
            });
        }
    });
    if let Some(e) = io_error.into_inner().expect("lock") {
        return Err(e);
    }
    let rows: Vec<SweepRow> =
        rows.into_inner().expect("lock").into_iter().map(|r| r.expect("every entry ran")).collect();
    let mut failed = 0;
    for (k, (row, error)) in rows.iter().enumerate() {
        for (key, v) in row {
            report.put("sweep", format!("entry{k}.{key}"), v);
        }
        if let Some(e) = error {
            failed += 1;
            report.put("sweep", format!("entry{k}.error"), e);
        }
    }
    report.put("sweep", "entries", n);
    report.put("sweep", "failed", failed);
    if cfg.wants(Format::Csv) {
        // merge the per-entry files in entry order
        let mut merged = String::from(SWEEP_HEADER);
        merged.push('\n');
        for k in 0..n {
            let path = entry_dir.join(format!("entry_{k:03}.csv"));
            let text = fs::read_to_string(&path).map_err(|source| RunError::Io { path: path.clone(), source })?;
            for line in text.lines().skip(1) {
                merged.push_str(line);
                merged.push('\n');
            }
            out.files.push(path);
        }
        out.write("sweep.csv", |w| w.write_all(merged.as_bytes()))?;
    }
    if failed > 0 {
        return Err(RunError::Solver(format!("{failed} of {n} sweep entries failed")));
    }
    Ok(())
}
