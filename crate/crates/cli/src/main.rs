//! `turnpref`: command-line runner for planning, iterative training, the
//! theoretical loop, sweeps and audits.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use turnpref_core::CoreError;

use crate::config::{ExperimentConfig, Overrides};

#[derive(Parser, Debug)]
#[command(
    name = "turnpref",
    version,
    about = "Multi-turn preference learning laboratory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct Common {
    /// Key-value config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads for sweeps (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Environment preset; overrides the config.
    #[arg(long, global = true)]
    env: Option<String>,
    /// KL coefficient; overrides the config.
    #[arg(long, global = true, allow_negative_numbers = true)]
    eta: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the KL-regularized planning problem and export the plan.
    Plan,
    /// Run the practical online iterative loop.
    Iterate,
    /// Run the theoretical loop and write the regret ledger.
    Theory,
    /// Grid over eta, reference mode and exploration.
    Sweep,
    /// Optimality-condition, Chebyshev and value-decomposition audits.
    Audit,
}

/// Identities checked by `audit` must hold to this tolerance.
const AUDIT_TOL: f64 = 1e-8;

fn run(cli: &Cli) -> Result<bool, CoreError> {
    let c = &cli.common;
    let mut overrides = Overrides {
        env: c.env.clone(),
        eta: c.eta,
        seed: c.seed,
    };
    if c.config.is_none()
        && overrides.seed.is_none()
        && matches!(cli.command, Command::Plan | Command::Audit)
    {
        // Planning needs no randomness, so a seed is optional there.
        overrides.seed = Some(0);
    }
    let cfg = ExperimentConfig::load(c.config.as_deref(), &overrides)?;
    let out = &c.out;
    match cli.command {
        Command::Plan => commands::plan(&cfg, out)?,
        Command::Iterate => {
            let last = commands::iterate(&cfg, out)?;
            println!(
                "round {}: expected utility {:.4}, KL target {:.4}, dataset {}",
                last.round, last.true_expected_utility, last.kl_target_value, last.dataset_size
            );
        }
        Command::Theory => {
            commands::theory(&cfg, out)?;
        }
        Command::Sweep => {
            let (outcomes, best) = commands::sweep(&cfg, out, c.jobs)?;
            let failed = outcomes.iter().filter(|o| o.result.is_err()).count();
            for o in outcomes.iter().filter(|o| o.result.is_err()) {
                eprintln!(
                    "cell {} failed: {}",
                    o.index,
                    o.result.as_ref().unwrap_err()
                );
            }
            match best {
                Some(i) => {
                    let l = &outcomes[i].config.looping;
                    println!(
                        "{} cells, {failed} failed; best cell {i} (eta {}, {} reference, {})",
                        outcomes.len(),
                        l.training.eta,
                        l.reference_mode,
                        l.exploration
                    );
                }
                None => {
                    eprintln!("all {} cells failed", outcomes.len());
                    return Ok(false);
                }
            }
        }
        Command::Audit => {
            let s = commands::audit(&cfg, out)?;
            if s.max_residual > AUDIT_TOL || s.max_decomposition_error > AUDIT_TOL {
                eprintln!("audit identities violated beyond {AUDIT_TOL:e}");
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}
