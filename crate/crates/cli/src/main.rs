use std::path::PathBuf;
use std::process::exit;

use clap::{Parser, Subcommand};

use outflux_cli::{execute, Invocation, Verb};

#[derive(Parser)]
#[command(name = "outflux", about = "Shear-thickening outflow experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Artifact directory (overrides out_dir from the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// RNG seed (overrides seed from the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve one configuration via continuation and write diagnostics.
    Run { config: PathBuf },
    /// Solve a grid of configurations and tabulate the outcomes.
    Sweep { config: PathBuf },
    /// Measure the inequality constants on the configured mesh.
    Ineq { config: PathBuf },
    /// Certify the flux carrier and its estimates.
    CarrierCheck { config: PathBuf },
}

fn main() {
    let cli = Cli::parse();
    let (verb, config_path) = match cli.cmd {
        Cmd::Run { config } => (Verb::Run, config),
        Cmd::Sweep { config } => (Verb::Sweep, config),
        Cmd::Ineq { config } => (Verb::Ineq, config),
        Cmd::CarrierCheck { config } => (Verb::CarrierCheck, config),
    };
    let inv = Invocation {
        verb,
        config_path,
        out: cli.out,
        seed: cli.seed,
        threads: cli.threads.max(1),
    };
    match execute(&inv) {
        Ok(code) => exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            exit(e.exit_code());
        }
    }
}
