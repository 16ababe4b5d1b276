//! Command-line harness over the flow library: solve runs, parameter
//! sweeps, inequality measurements, and carrier certification.

use std::fs;
use std::path::PathBuf;

use thiserror::Error;

use outflux::ineqlab::IneqError;
use outflux::solver::SolverError;
use outflux::vtk::VtkError;

mod artifacts;
mod commands;
pub mod config;

use config::{parse_config, ConfigError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Ineq(#[from] IneqError),
    #[error(transparent)]
    Vtk(#[from] VtkError),
}

impl CliError {
    /// 1 for bad input or filesystem trouble, 2 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) | CliError::Vtk(_) => 1,
            CliError::Solver(_) | CliError::Ineq(_) => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verb {
    Run,
    Sweep,
    Ineq,
    CarrierCheck,
}

#[derive(Debug)]
pub struct Invocation {
    pub verb: Verb,
    pub config_path: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: usize,
}

/// Load the config, validate, dispatch. The returned code is the process
/// exit status (0 ok, 2 solver gave up but artifacts were written).
pub fn execute(inv: &Invocation) -> Result<i32, CliError> {
    let text = fs::read_to_string(&inv.config_path).map_err(|e| {
        ConfigError(format!("config: {}: {e}", inv.config_path.display()))
    })?;
    let cfg = parse_config(&text)?;
    let domain = cfg.validate()?;
    let out = inv
        .out
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .ok_or_else(|| ConfigError("out_dir: missing (provide out_dir in config or --out)".into()))?;
    let seed = inv.seed.or(cfg.seed).unwrap_or(0);
    fs::create_dir_all(&out)?;
    match inv.verb {
        Verb::Run => commands::cmd_run(&cfg, &domain, &out, seed),
        Verb::Sweep => commands::cmd_sweep(&cfg, &domain, &out, inv.threads),
        Verb::Ineq => commands::cmd_ineq(&cfg, &domain, &out, seed),
        Verb::CarrierCheck => commands::cmd_carrier_check(&cfg, &domain, &out),
    }
}
