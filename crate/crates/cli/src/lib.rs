//! Command implementations behind the `dospde` binary.
//!
//! Every command resolves its inputs into a [`Job`] plus a problem file, runs
//! it, and writes CSV tables and a `manifest.json` into the output
//! directory. The manifest holds the resolved job, config and seed, so
//! `dospde replay` reproduces the CSVs byte for byte.

pub mod args;
pub mod output;

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use dospde::config::{ConfigError, ProblemFile};
use dospde::grid::{self, GridSolution, PenaltyMode, SolveError, SolveMode};
use dospde::model::{check_hypotheses, make_noise, Discretization, NoisePath, ProblemSpec};
use dospde::picard::{self, PicardError};
use dospde::validation::{self, SuiteConfig, SuiteError, ValidationError};

pub use args::{Cli, Command, ModeArg};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Contraction(String),
    #[error("{0}")]
    Convergence(String),
    #[error("{0}")]
    Solve(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Check(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Contraction(_) => "contraction",
            CliError::Convergence(_) => "convergence",
            CliError::Solve(_) => "solve",
            CliError::Io(_) => "io",
            CliError::Check(_) => "check",
        }
    }

    /// 1 check failure, 2 usage or configuration, 3 non-convergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Check(_) => 1,
            CliError::Convergence(_) => 3,
            _ => 2,
        }
    }

    /// Single-line `E:<kind>:<detail>` form for stderr.
    pub fn line(&self) -> String {
        let detail = self.to_string().replace('\n', " ");
        format!("E:{}:{}", self.kind(), detail)
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::NotFound(p) => CliError::Config(format!("not found: {p}")),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<SolveError> for CliError {
    fn from(e: SolveError) -> Self {
        CliError::Solve(e.to_string())
    }
}

impl From<PicardError> for CliError {
    fn from(e: PicardError) -> Self {
        match e {
            PicardError::NotContractive { .. } => CliError::Contraction(e.to_string()),
            PicardError::NoConvergence { .. } => CliError::Convergence(e.to_string()),
            PicardError::Solve(s) => s.into(),
        }
    }
}

impl From<ValidationError> for CliError {
    fn from(e: ValidationError) -> Self {
        match e {
            ValidationError::Picard(p) => p.into(),
            ValidationError::Solve(s) => s.into(),
            ValidationError::InvalidLevels | ValidationError::NotLinear | ValidationError::UnsupportedPhi(_) => {
                CliError::Config(e.to_string())
            }
            other => CliError::Solve(other.to_string()),
        }
    }
}

impl From<SuiteError> for CliError {
    fn from(e: SuiteError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// A fully resolved unit of work, as recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Job {
    Solve { mode: ModeArg, penalty: Option<f64> },
    Sweep { levels: Vec<f64> },
    Picard { tol: f64, max_iter: usize },
    Validate { suite: SuiteConfig },
}

impl Job {
    pub fn name(&self) -> &'static str {
        match self {
            Job::Solve { .. } => "solve",
            Job::Sweep { .. } => "sweep",
            Job::Picard { .. } => "picard",
            Job::Validate { .. } => "validate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    #[serde(flatten)]
    pub job: Job,
    /// Resolved problem file (absent for `validate`).
    pub config: Option<ProblemFile>,
    pub seed: Option<u64>,
    pub threads: usize,
    pub wall_time_s: f64,
    pub files: Vec<String>,
}

/// Runs a parsed command line. Returns the files written.
pub fn run(cli: &Cli) -> Result<Vec<String>, CliError> {
    match &cli.command {
        Command::Solve { config, mode, penalty, seed, out } => {
            if *mode == ModeArg::Free && penalty.is_some() {
                log::warn!("--penalty is ignored in free mode");
            }
            let file = load(config, *seed)?;
            let job = Job::Solve {
                mode: *mode,
                penalty: match mode {
                    ModeArg::Penalized | ModeArg::PenalizedDouble => Some(penalty.unwrap_or(100.0)),
                    _ => None,
                },
            };
            execute(&job, Some(file), out)
        }
        Command::Sweep { config, levels, seed, out } => {
            let levels = args::parse_levels(levels)?;
            execute(&Job::Sweep { levels }, Some(load(config, *seed)?), out)
        }
        Command::Picard { config, tol, max_iter, seed, out } => {
            let file = load(config, *seed)?;
            let job = Job::Picard {
                tol: tol.unwrap_or(file.picard.tol),
                max_iter: max_iter.unwrap_or(file.picard.max_iter),
            };
            execute(&job, Some(file), out)
        }
        Command::Validate { suite, out } => {
            let cfg = if suite == "default" {
                SuiteConfig::default_suite()
            } else {
                let text = std::fs::read_to_string(suite).map_err(|_| CliError::Config(format!("not found: {suite}")))?;
                SuiteConfig::from_toml(&text)?
            };
            execute(&Job::Validate { suite: cfg }, None, out)
        }
        Command::Replay { manifest, out } => {
            let text = std::fs::read_to_string(manifest).map_err(|_| CliError::Config(format!("not found: {manifest}")))?;
            let m: Manifest =
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("manifest: {e}")))?;
            if m.version != env!("CARGO_PKG_VERSION") {
                log::warn!("manifest written by version {}, replaying with {}", m.version, env!("CARGO_PKG_VERSION"));
            }
            execute(&m.job, m.config, out)
        }
    }
}

fn load(config: &str, seed: Option<u64>) -> Result<ProblemFile, CliError> {
    let mut file = ProblemFile::load(config)?;
    if let Some(s) = seed {
        file.noise.seed = s;
    }
    Ok(file)
}

struct Problem {
    spec: ProblemSpec,
    disc: Discretization,
    noise: NoisePath,
}

fn compile(file: &ProblemFile) -> Result<Problem, CliError> {
    let spec = file.spec()?;
    let disc = file.discretization()?;
    let report = check_hypotheses(&spec, &disc).map_err(|e| CliError::Config(e.to_string()))?;
    for v in &report.violations {
        log::warn!("hypothesis {} violated at {} nodes (worst {:e})", v.hypothesis.label(), v.count, v.magnitude);
    }
    for w in &report.warnings {
        log::warn!("{w}");
    }
    let noise = make_noise(file.noise.seed, disc.nt, spec.d1, spec.horizon);
    Ok(Problem { spec, disc, noise })
}

/// Runs `job` and writes its outputs plus `manifest.json` into `out`.
pub fn execute(job: &Job, config: Option<ProblemFile>, out: &Path) -> Result<Vec<String>, CliError> {
    let started = Instant::now();
    std::fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    let mut files = Vec::new();
    let result = run_job(job, config.as_ref(), out, &mut files);
    // A manifest is written even when the job fails part-way (e.g. a Picard
    // trace without convergence), so the partial outputs stay reproducible.
    let manifest = Manifest {
        tool: "dospde".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        job: job.clone(),
        seed: config.as_ref().map(|c| c.noise.seed),
        config,
        threads: rayon::current_num_threads(),
        wall_time_s: started.elapsed().as_secs_f64(),
        files: files.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    output::write_atomic(out, "manifest.json", json.as_bytes())?;
    files.push("manifest.json".into());
    result.map(|_| files)
}

fn require_config(config: Option<&ProblemFile>) -> Result<&ProblemFile, CliError> {
    config.ok_or_else(|| CliError::Config("job needs a problem config".into()))
}

fn run_job(job: &Job, config: Option<&ProblemFile>, out: &Path, files: &mut Vec<String>) -> Result<(), CliError> {
    match job {
        Job::Solve { mode, penalty } => {
            let file = require_config(config)?;
            let p = compile(file)?;
            let sol = solve_mode(file, &p, *mode, *penalty)?;
            write_solution(out, &p, &sol, files)
        }
        Job::Sweep { levels } => {
            let p = compile(require_config(config)?)?;
            let report = validation::check_penalization_sweep(&p.spec, &p.disc, &p.noise, levels, None)?;
            output::write_csv(out, "sweep.csv", &output::sweep_table(&report.rows))?;
            files.push("sweep.csv".into());
            if !report.pass {
                let why = match report.first_violation {
                    Some((n1, n2, k, j, d)) => format!("u at level {n2} exceeds level {n1} at k={k}, j={j} by {d:e}"),
                    None => format!(
                        "excess monotone {}, distance monotone {}, final excess vs tolerance {:e}",
                        report.excess_monotone, report.diff_monotone, report.tol_excess
                    ),
                };
                return Err(CliError::Check(format!("penalization sweep failed: {why}")));
            }
            Ok(())
        }
        Job::Picard { tol, max_iter } => {
            let p = compile(require_config(config)?)?;
            match picard::picard_solve(&p.spec, &p.disc, &p.noise, *tol, *max_iter) {
                Ok(outcome) => {
                    output::write_csv(out, "trace.csv", &output::trace_table(&outcome.trace))?;
                    files.push("trace.csv".into());
                    write_solution(out, &p, &outcome.solution, files)
                }
                Err(PicardError::NoConvergence { max_iter, last_norm_sq, trace }) => {
                    output::write_csv(out, "trace.csv", &output::trace_table(&trace))?;
                    files.push("trace.csv".into());
                    Err(PicardError::NoConvergence { max_iter, last_norm_sq, trace }.into())
                }
                Err(e) => Err(e.into()),
            }
        }
        Job::Validate { suite } => {
            let summary = validation::run_suite(suite)?;
            output::write_csv(out, "summary.csv", &output::summary_table(&summary))?;
            let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
            output::write_atomic(out, "summary.json", json.as_bytes())?;
            files.push("summary.csv".into());
            files.push("summary.json".into());
            let failed: Vec<String> = summary
                .rows
                .iter()
                .filter(|r| r.status != validation::RowStatus::Pass)
                .map(|r| format!("{}/{}={}", r.check, r.instance, r.status))
                .collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(CliError::Check(format!("{} of {} checks did not pass: {}", failed.len(), summary.rows.len(), failed.join(" "))))
            }
        }
    }
}

fn solve_mode(file: &ProblemFile, p: &Problem, mode: ModeArg, penalty: Option<f64>) -> Result<GridSolution, CliError> {
    let has_obstacles = p.spec.lower.is_some() || p.spec.upper.is_some();
    let grid_mode = match mode {
        ModeArg::Free => {
            if has_obstacles {
                log::warn!("free mode: obstacles are ignored");
            }
            SolveMode::Free
        }
        ModeArg::Projected => SolveMode::Projected,
        ModeArg::Penalized | ModeArg::PenalizedDouble => {
            let n = penalty.unwrap_or(100.0);
            if !(n.is_finite() && n >= 0.0) {
                return Err(CliError::Config(format!("penalty level must be finite and >= 0, got {n}")));
            }
            let submode = if mode == ModeArg::Penalized { PenaltyMode::Upper } else { PenaltyMode::Double };
            SolveMode::Penalized { n, submode }
        }
    };
    if p.spec.depends_on_solution() {
        if grid_mode != SolveMode::Projected {
            return Err(CliError::Config(format!(
                "mode {} needs coefficients independent of (y, z1); use projected or picard",
                mode.name()
            )));
        }
        return Ok(picard::solve_projected(&p.spec, &p.disc, &p.noise, file.picard.tol, file.picard.max_iter)?);
    }
    Ok(grid::solve(&p.spec, &p.disc, &p.noise, None, grid_mode)?)
}

fn write_solution(out: &Path, p: &Problem, sol: &GridSolution, files: &mut Vec<String>) -> Result<(), CliError> {
    if sol.diagnostics.boundary_flux {
        log::warn!("solution varies at the ends of D = [-{r}, {r}]; enlarge R", r = p.disc.radius);
    }
    let times = p.disc.times(p.spec.horizon);
    let xs = p.disc.nodes();
    for (name, table) in [
        ("u.csv", output::field_table(&sol.u, &times, &xs)),
        ("nu_plus.csv", output::measure_table(&sol.nu_plus, &times, &xs)),
        ("nu_minus.csv", output::measure_table(&sol.nu_minus, &times, &xs)),
        ("diagnostics.csv", output::diagnostics_table(&sol.diagnostics, &times)),
    ] {
        output::write_csv(out, name, &table)?;
        files.push(name.into());
    }
    Ok(())
}
