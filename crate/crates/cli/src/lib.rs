//! Command line harness: configuration, experiment pipelines and report files.

pub mod commands;
pub mod config;
pub mod report;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use mfg_antimono::certify::CertifyError;
use mfg_antimono::monotonicity::MonotonicityError;
use mfg_antimono::solver::SolverError;
use sha2::{Digest, Sha256};

pub use config::{parse_config, ConfigError, RunConfig};
pub use report::{write_report, CheckRow, RunReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED_CHECKS: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NO_CONVERGENCE: i32 = 3;

/// Environment variable holding the default output directory.
pub const OUT_ENV: &str = "MFG_ANTIMONO_OUT";
pub const DEFAULT_OUT: &str = "mfg-antimono-out";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Certify(#[from] CertifyError),
    #[error(transparent)]
    Monotonicity(#[from] MonotonicityError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Solver(
                SolverError::NoConvergence { .. }
                | SolverError::GridEscape { .. }
                | SolverError::BlowUp { .. }
                | SolverError::OutOfGrid { .. },
            ) => EXIT_NO_CONVERGENCE,
            _ => EXIT_CONFIG,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Constant ledger of the configured model.
    Certify,
    /// Doubling search over the concave example family.
    ConstructExample,
    /// Solve the MFG system and export the solution.
    Solve,
    /// Monte Carlo anti-monotonicity of the solved field along the flow.
    CheckAntimono,
    /// Linearized flow and the Γ monitor.
    GammaFlow,
    /// W_q-Lipschitz estimate of the decoupling field in the measure.
    Lipschitz,
    /// Grid sup of |u_xx| against the ledger bound.
    Hessian,
    /// Solver against the Riccati oracle at two resolutions.
    LqValidate,
    /// Certification over a list of values of one parameter.
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Certify => "certify",
            Command::ConstructExample => "construct-example",
            Command::Solve => "solve",
            Command::CheckAntimono => "check-antimono",
            Command::GammaFlow => "gamma-flow",
            Command::Lipschitz => "lipschitz",
            Command::Hessian => "hessian",
            Command::LqValidate => "lq-validate",
            Command::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mfg-antimono", version, about = "Anti-monotone MFG certification and numerical checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// INI configuration file; defaults apply to everything not given.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed, overriding `[experiment] seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

/// Per-component seed: the first eight bytes of SHA-256(master ‖ component).
pub fn derive_seed(master: u64, component: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(component.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let text = match &cli.config {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| ConfigError { line: None, msg: format!("cannot read {}: {e}", p.display()) })?,
        None => String::new(),
    };
    let cfg = parse_config(&text)?;
    Ok(match cli.seed {
        Some(s) => cfg.with_value("experiment", "seed", &s.to_string())?,
        None => cfg,
    })
}

fn out_dir(cli: &Cli, cfg: &RunConfig, env_out: Option<&Path>) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.output.dir.as_ref().map(PathBuf::from))
        .or_else(|| env_out.map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

/// Entry point; reads the default output directory from the environment.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let env_out = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
    run_with_env(args, env_out.as_deref())
}

pub fn run_with_env<I, T>(args: I, env_out: Option<&Path>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let cfg = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let dir = out_dir(&cli, &cfg, env_out);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.jobs.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return EXIT_CONFIG;
        }
    };
    let start = Instant::now();
    let mut rep = RunReport {
        command: cli.command.name().to_string(),
        seed: cfg.experiment.seed,
        config: cfg.echo(),
        ..Default::default()
    };
    let result = pool.install(|| commands::execute(cli.command, &cfg, &mut rep));
    rep.wall_clock_seconds = start.elapsed().as_secs_f64();
    let mut code = match &result {
        Ok(()) if rep.passed() => EXIT_OK,
        Ok(()) => {
            eprintln!("failed checks: {}", rep.failing().join(", "));
            EXIT_FAILED_CHECKS
        }
        Err(e) => {
            eprintln!("error: {e}");
            rep.error = Some(e.to_string());
            e.exit_code()
        }
    };
    if let Err(e) = write_report(&rep, &dir) {
        eprintln!("error: cannot write report to {}: {e}", dir.display());
        code = code.max(EXIT_CONFIG);
    }
    code
}
