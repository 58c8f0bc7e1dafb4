use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use opchain_cli::commands::{execute, load_config};
use opchain_cli::{CliError, Command};

#[derive(Parser)]
#[command(name = "opchain", version, about = "Copper diffusion in a silicon chain: full and reduced dynamics")]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed, overriding `ensemble.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads, overriding `run.workers` (0 uses every core).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory, overriding `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Integrate one sample and write its trajectory.
    Simulate,
    /// Run the thermal ensemble and write the cell distribution.
    Ensemble,
    /// Run the original and reduced ensembles and compare them.
    Analyze,
    /// Laplace-order, RK4 and matrix-exponential checks.
    Verify,
    /// Time the original and reduced systems over a range of chain lengths.
    Bench,
    /// Fit the copper bump height to the target hopping barrier.
    Calibrate,
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let mut cfg = load_config(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.ensemble.base_seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.ensemble.workers = (w > 0).then_some(w);
    }
    if let Some(o) = cli.out {
        cfg.out_dir = o;
    }
    let cmd = match cli.cmd {
        Cmd::Simulate => Command::Simulate,
        Cmd::Ensemble => Command::Ensemble,
        Cmd::Analyze => Command::Analyze,
        Cmd::Verify => Command::Verify,
        Cmd::Bench => Command::Bench,
        Cmd::Calibrate => Command::Calibrate,
    };
    let out = execute(cmd, &cfg)?;
    for (k, v) in &out.manifest.summary {
        println!("{k}: {v}");
    }
    println!("wrote {} files to {}", out.manifest.files.len() + 1, out.dir.display());
    if !out.ok {
        eprintln!("{}: invariant check failed", cmd.name());
    }
    Ok(out.ok)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
