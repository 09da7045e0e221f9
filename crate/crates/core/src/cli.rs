//! Command surface: `compute`, `verify`, `crosscheck` and `spectrum`.
//!
//! Exit codes: 0 on success, 1 on input errors, 2 when an enabled check fails.
//! stdout carries a human summary; `--out` and `--csv` files carry machine output.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::error::{QmfError, Result};
use crate::fd::crosscheck_eigenvalue_1d;
use crate::hermite::{build_spectrum, LevelSelector};
use crate::operator::JetProblem;
use crate::pipeline::{compute_quasimodes, rs_oracle, verify_all, CheckOutcome, Quasimodes, VerificationReport};
use crate::presets::preset;
use crate::report;
use crate::scalar::{parse_rational, Rational, Scalar};
use crate::series::HalfInt;
use crate::spec_file::{parse_problem_spec, ChecksConfig, Mode, CHECK_NAMES};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_CHECK: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "qmf", version, about = "Formal quasimode expansions near a potential minimum")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Source {
    /// Problem file (TOML).
    #[arg(long, conflicts_with = "preset")]
    spec: Option<PathBuf>,
    /// Built-in problem, e.g. `cubic:c=1/2`.
    #[arg(long)]
    preset: Option<String>,
    /// Eigenvalue level E0.
    #[arg(long, conflicts_with = "level_index")]
    level: Option<String>,
    /// Position of the level among distinct harmonic levels, from 0.
    #[arg(long)]
    level_index: Option<usize>,
    /// exact or float; overrides the problem file.
    #[arg(long)]
    mode: Option<String>,
    /// Write the JSON result here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Eigenvalue series and quasimodes of one level.
    Compute {
        #[command(flatten)]
        source: Source,
        /// Order N in ħ, a multiple of 1/2.
        #[arg(long)]
        order: Option<String>,
    },
    /// Compute, then run the selected checks.
    Verify {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        order: Option<String>,
        /// `all` or a comma-separated list of check names.
        #[arg(long)]
        checks: Option<String>,
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Finite-difference comparison of the eigenvalue series (1-D scalar problems).
    Crosscheck {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        order: Option<String>,
        /// Comma-separated values of ħ.
        #[arg(long)]
        hbar: Option<String>,
        /// Interior points of the coarse grid.
        #[arg(long)]
        grid: Option<usize>,
        /// Write `hbar,error` pairs here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Harmonic-oscillator spectrum up to a total degree.
    Spectrum {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        degree: usize,
    },
}

/// Result of one invocation.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
    /// Documents produced, also written to `--out` when given.
    pub documents: Vec<Value>,
}

struct Job {
    problem: JetProblem<Rational>,
    level: LevelSelector<Rational>,
    order: HalfInt,
    mode: Mode,
    checks: ChecksConfig,
    config: Value,
}

fn load(source: &Source, order: Option<&str>) -> Result<Job> {
    let (problem, mut level, mut mode, mut file_order, checks, origin) = match (&source.spec, &source.preset) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path).map_err(|e| QmfError::Io(format!("{}: {e}", path.display())))?;
            let spec = parse_problem_spec(&text)?;
            let origin = json!({ "spec": path.display().to_string() });
            (spec.problem, spec.level, spec.mode, Some(spec.order), spec.checks, origin)
        }
        (None, Some(name)) => {
            let p = preset(name)?;
            (p.problem, Some(p.level), Mode::Exact, None, ChecksConfig::default(), json!({ "preset": name }))
        }
        _ => return Err(QmfError::Parse("exactly one of --spec or --preset is required".into())),
    };
    if let Some(v) = &source.level {
        level = Some(LevelSelector::Value(parse_rational(v)?));
    }
    if let Some(i) = source.level_index {
        level = Some(LevelSelector::Index(i));
    }
    if let Some(m) = &source.mode {
        mode = match m.as_str() {
            "exact" => Mode::Exact,
            "float" => Mode::Float,
            other => return Err(QmfError::Parse(format!("unknown mode '{other}' (exact or float)"))),
        };
    }
    if let Some(o) = order {
        file_order = Some(o.parse::<HalfInt>().map_err(|_| QmfError::Parse(format!("invalid order '{o}'")))?);
    }
    let order = file_order.unwrap_or(HalfInt::from_doubled(4));
    if order.doubled < 0 {
        return Err(QmfError::Parse("order must be nonnegative".into()));
    }
    let level = level.unwrap_or(LevelSelector::Index(0));
    let level_json = match &level {
        LevelSelector::Value(e) => json!({ "value": e.to_json() }),
        LevelSelector::Index(i) => json!({ "index": i }),
    };
    let config = json!({
        "source": origin,
        "mode": mode.name(),
        "order_doubled": order.doubled,
        "level": level_json,
    });
    Ok(Job {
        problem,
        level,
        order,
        mode,
        checks,
        config,
    })
}

fn convert_level<S: Scalar>(l: &LevelSelector<Rational>) -> LevelSelector<S> {
    match l {
        LevelSelector::Value(e) => LevelSelector::Value(S::from_rational(e)),
        LevelSelector::Index(i) => LevelSelector::Index(*i),
    }
}

fn summary<S: Scalar>(q: &Quasimodes<S>) -> String {
    let res = &q.result;
    let mut s = format!(
        "level E0 = {} (multiplicity {}, K = {}, {}), order {}\n",
        res.level.e0.display(),
        res.level.m0,
        res.level.k,
        res.level.parity.name(),
        res.order
    );
    for (i, (e, c)) in res.eigenvalues.iter().zip(&res.norms).enumerate() {
        s.push_str(&format!("  E_{i}/ħ = {e}"));
        if !c.is_one() {
            s.push_str(&format!("   [norm² {}]", c.display()));
        }
        s.push('\n');
    }
    s
}

fn report_summary(r: &VerificationReport) -> String {
    r.checks
        .iter()
        .map(|c| {
            format!(
                "  {:<16} {}  max residual {:.3e}{}\n",
                c.name,
                if c.passed { "PASS" } else { "FAIL" },
                c.max_residual,
                if c.detail.is_empty() { String::new() } else { format!("  ({})", c.detail) }
            )
        })
        .collect()
}

fn skipped(name: &str, order: HalfInt, why: &str) -> CheckOutcome {
    CheckOutcome {
        name: name.to_string(),
        order,
        max_residual: 0.0,
        passed: true,
        detail: format!("skipped: {why}"),
    }
}

fn rs_check<S: Scalar>(job: &Job, problem: &JetProblem<S>, q: &Quasimodes<S>, tol: f64) -> Result<CheckOutcome> {
    if q.result.level.m0 != 1 {
        return Ok(skipped("rs", job.order, "level is degenerate"));
    }
    let oracle = rs_oracle(problem, &convert_level(&job.level), job.order)?;
    let got = &q.result.eigenvalues[0];
    let mut worst: f64 = 0.0;
    for e in HalfInt::range_inclusive(HalfInt::ZERO, job.order) {
        let d = got.coeff(e) - oracle.coeff(e);
        worst = worst.max(d.abs_f64());
    }
    let passed = if S::EXACT { worst == 0.0 } else { worst <= tol.max(1e-10) };
    Ok(CheckOutcome {
        name: "rs".into(),
        order: job.order,
        max_residual: worst,
        passed,
        detail: String::new(),
    })
}

fn level_alpha<S: Scalar>(q: &Quasimodes<S>) -> Option<usize> {
    let level = &q.result.level;
    (level.m0 == 1 && level.members[0].alpha.dim() == 1).then(|| level.members[0].alpha.get(0) as usize)
}

fn fd_check<S: Scalar>(job: &Job, problem: &JetProblem<S>, q: &Quasimodes<S>) -> Result<(CheckOutcome, Option<Value>)> {
    let Some(index) = level_alpha(q) else {
        return Ok((skipped("crosscheck", job.order, "needs a nondegenerate one-dimensional level"), None));
    };
    let r = match crosscheck_eigenvalue_1d(problem, &q.result.eigenvalues[0], job.order, index, &job.checks.hbar, job.checks.grid) {
        Ok(r) => r,
        Err(QmfError::Invalid(why)) => return Ok((skipped("crosscheck", job.order, &why), None)),
        Err(e) => return Err(e),
    };
    let detail = format!("slope {:.3} (required {:.2})", r.slope, r.required_slope);
    let max_err = r.samples.iter().map(|s| s.error).fold(0.0, f64::max);
    Ok((
        CheckOutcome {
            name: "crosscheck".into(),
            order: job.order,
            max_residual: max_err,
            passed: r.passed,
            detail,
        },
        Some(report::fd_json(&r)),
    ))
}

fn verify_job<S: Scalar>(job: &Job, problem: &JetProblem<S>, q: &Quasimodes<S>) -> Result<(VerificationReport, Option<Value>)> {
    let tol = if S::EXACT { 0.0 } else { job.checks.tolerance };
    let all = verify_all(q, tol, job.checks.has("projector"))?;
    let mut out = VerificationReport::default();
    for c in all.checks {
        if job.checks.has(&c.name) {
            out.push(c);
        }
    }
    if job.checks.has("rs") {
        out.push(rs_check(job, problem, q, job.checks.tolerance)?);
    }
    let mut fd = None;
    if job.checks.has("crosscheck") {
        let (c, doc) = fd_check(job, problem, q)?;
        out.push(c);
        fd = doc;
    }
    Ok((out, fd))
}

fn run_level<S: Scalar>(job: &Job, problem: JetProblem<S>, kind: &str) -> Result<Outcome> {
    let level = convert_level::<S>(&job.level);
    let q = compute_quasimodes(&problem, &level, job.order)?;
    let mut out = Outcome {
        stdout: summary(&q),
        ..Outcome::default()
    };
    match kind {
        "compute" => {
            out.documents.push(report::result_document("compute", &q, None, job.config.clone()));
        }
        "verify" => {
            let (r, fd) = verify_job(job, &problem, &q)?;
            out.stdout.push_str(&report_summary(&r));
            let mut doc = report::result_document("verify", &q, Some(&r), job.config.clone());
            if let (Some(fd), Value::Object(m)) = (fd, &mut doc) {
                m.insert("crosscheck".into(), fd);
            }
            out.documents.push(doc);
            if !r.passed() {
                out.code = EXIT_CHECK;
            }
        }
        _ => {
            let Some(index) = level_alpha(&q) else {
                return Err(QmfError::Invalid("crosscheck needs a nondegenerate one-dimensional level".into()));
            };
            let r = crosscheck_eigenvalue_1d(&problem, &q.result.eigenvalues[0], job.order, index, &job.checks.hbar, job.checks.grid)?;
            out.stdout.push_str("  hbar        series              finite difference   error\n");
            for s in &r.samples {
                out.stdout.push_str(&format!(
                    "  {:<10}  {:<18.12}  {:<18.12}  {:.3e}\n",
                    s.hbar, s.series, s.extrapolated, s.error
                ));
            }
            out.stdout.push_str(&format!(
                "  slope {:.3}, required {:.2}: {}\n",
                r.slope,
                r.required_slope,
                if r.passed { "PASS" } else { "FAIL" }
            ));
            out.stderr = r.to_csv();
            out.documents.push(report::crosscheck_document(&r, job.config.clone()));
            if !r.passed {
                out.code = EXIT_CHECK;
            }
        }
    }
    Ok(out)
}

fn run_spectrum<S: Scalar>(job: &Job, problem: JetProblem<S>, degree: usize) -> Result<Outcome> {
    problem.validate()?;
    let mu = problem.fiber_spectrum()?;
    let table = build_spectrum(&problem.lambda, &mu, degree);
    let mut stdout = String::from("  alpha        fiber  eigenvalue\n");
    for (h, e) in &table.entries {
        stdout.push_str(&format!("  {:<12} {:<6} {}\n", format!("{:?}", h.alpha.entries()), h.k + 1, e.display()));
    }
    let mut config = job.config.clone();
    if let Value::Object(m) = &mut config {
        m.remove("order_doubled");
        m.remove("level");
    }
    Ok(Outcome {
        code: EXIT_OK,
        stdout,
        stderr: String::new(),
        documents: vec![report::spectrum_document(&table, config)],
    })
}

fn dispatch(cli: Cli) -> Result<(Outcome, Option<PathBuf>, Option<PathBuf>)> {
    let (kind, source, order, degree) = match &cli.command {
        Command::Compute { source, order } => ("compute", source, order.as_deref(), None),
        Command::Verify { source, order, .. } => ("verify", source, order.as_deref(), None),
        Command::Crosscheck { source, order, .. } => ("crosscheck", source, order.as_deref(), None),
        Command::Spectrum { source, degree } => ("spectrum", source, None, Some(*degree)),
    };
    let mut job = load(source, order)?;
    let mut csv = None;
    match &cli.command {
        Command::Verify { checks, tolerance, .. } => {
            if let Some(c) = checks {
                job.checks.enabled = ChecksConfig::parse_list(c)?;
            }
            if let Some(t) = tolerance {
                job.checks.tolerance = *t;
            }
            if let Value::Object(m) = &mut job.config {
                let enabled: Vec<&str> = CHECK_NAMES.iter().copied().filter(|c| job.checks.has(c)).collect();
                m.insert("checks".into(), json!(enabled));
                m.insert("tolerance".into(), json!(job.checks.tolerance));
            }
        }
        Command::Crosscheck { hbar, grid, csv: c, .. } => {
            if let Some(h) = hbar {
                job.checks.hbar = h
                    .split(',')
                    .map(|s| s.trim().parse::<f64>().map_err(|_| QmfError::Parse(format!("invalid ħ '{s}'"))))
                    .collect::<Result<_>>()?;
            }
            if let Some(g) = grid {
                job.checks.grid = *g;
            }
            if let Value::Object(m) = &mut job.config {
                m.insert("hbar".into(), json!(job.checks.hbar));
                m.insert("grid".into(), json!(job.checks.grid));
            }
            csv = c.clone();
        }
        _ => {}
    }
    let problem = job.problem.clone();
    let outcome = match (degree, job.mode) {
        (Some(d), Mode::Exact) => run_spectrum(&job, problem, d)?,
        (Some(d), Mode::Float) => run_spectrum(&job, problem.to_float(), d)?,
        (None, Mode::Exact) => run_level(&job, problem, kind)?,
        (None, Mode::Float) => run_level(&job, problem.to_float(), kind)?,
    };
    Ok((outcome, source.out.clone(), csv))
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run_command<I, T>(argv: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            return if code == EXIT_OK {
                Outcome { code, stdout: text, ..Outcome::default() }
            } else {
                Outcome { code, stderr: text, ..Outcome::default() }
            };
        }
    };
    match dispatch(cli) {
        Ok((mut out, path, csv)) => {
            let csv_text = std::mem::take(&mut out.stderr);
            if let Some(path) = csv {
                if let Err(e) = std::fs::write(&path, csv_text) {
                    return input_error(QmfError::Io(format!("{}: {e}", path.display())));
                }
            }
            if let (Some(path), Some(doc)) = (path, out.documents.first()) {
                if let Err(e) = std::fs::write(&path, report::to_text(doc)) {
                    return input_error(QmfError::Io(format!("{}: {e}", path.display())));
                }
            }
            out
        }
        Err(e) => input_error(e),
    }
}

fn input_error(e: QmfError) -> Outcome {
    Outcome {
        code: EXIT_INPUT,
        stderr: format!("error: {e}\n"),
        ..Outcome::default()
    }
}

/// Caps the global thread pool at `QMF_THREADS` when set.
pub fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("QMF_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| QmfError::Parse(format!("QMF_THREADS must be a positive integer, got '{v}'")))?;
        if n == 0 {
            return Err(QmfError::Parse("QMF_THREADS must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| QmfError::Invalid(e.to_string()))?;
    }
    Ok(())
}
