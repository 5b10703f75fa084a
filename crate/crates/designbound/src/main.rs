use std::process::ExitCode;

use clap::{Parser, Subcommand};
use designbound::commands::analyze::{self, AnalyzeArgs};
use designbound::commands::oracle::{self, OracleCommand};
use designbound::commands::perturb::{self, PerturbArgs};
use designbound::commands::simulate::{self, SimulateArgs};
use designbound::serve::{self, ServeArgs};
use designbound::CliError;

/// Regression bias bounds from covariate imbalance.
#[derive(Debug, Parser)]
#[command(name = "designbound", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit, design phase, balance, bounds and robust intervals into a report.
    Analyze(AnalyzeArgs),
    /// Score a sketched misspecification against a report.
    Perturb(PerturbArgs),
    /// Monte Carlo study of matching on a synthetic population.
    Simulate(SimulateArgs),
    /// Serve a report over HTTP for the explorer.
    Serve(ServeArgs),
    /// Print reference values of the worked examples.
    #[command(subcommand)]
    Oracle(OracleCommand),
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Analyze(args) => {
            let report = analyze::run(&args, std::env::args().collect())?;
            eprintln!("wrote {}", args.out.display());
            if let Some(inf) = &report.inference {
                eprintln!(
                    "beta_hat {:.6}  se {:.6}  C(0) [{:.6}, {:.6}]",
                    inf.beta_hat, inf.se, inf.classical_ci[0], inf.classical_ci[1]
                );
                for f in &inf.families {
                    eprintln!("  {:<4} c {:.6}  m-value {:.6}", f.family.name(), f.c, f.m_value);
                }
            }
        }
        Command::Perturb(args) => {
            perturb::run(&args)?;
        }
        Command::Simulate(args) => {
            let s = simulate::run(&args)?;
            eprintln!("wrote {} ({} completed, {} skipped)", args.out.display(), s.completed, s.skipped.len());
            for spec in &s.specs {
                if let Some(share) = spec.improved_share {
                    eprintln!("  {:<9} |bias| shrank in {:.1}% of replications", spec.spec.name(), 100.0 * share);
                }
            }
        }
        Command::Serve(args) => serve::run(&args)?,
        Command::Oracle(cmd) => designbound::error::print_stdout(&oracle::run(&cmd)?)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
