use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use manet_cli::format::{fmt_g, fmt_opt};
use manet_cli::{
    cmd_compare, cmd_run, cmd_sweep, CliError, RunArgs, SweepArgs, DEFAULT_SWEEP_SIZES,
};
use manet_core::Protocol;

#[derive(Parser)]
#[command(
    name = "manetsim",
    version,
    about = "MANET routing simulator: AODV vs trust-based AODV"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file.
    #[arg(long)]
    scenario: PathBuf,
    /// Comma-separated seeds; defaults to the scenario's seed.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one protocol for each seed.
    Run {
        #[command(flatten)]
        common: Common,
        /// Overrides the scenario's protocol.
        #[arg(long)]
        protocol: Option<Protocol>,
        /// Also write the event trace of every run.
        #[arg(long)]
        trace: bool,
    },
    /// Simulate both protocols on the same seeds and tabulate the deltas.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trace: bool,
    },
    /// Compare both protocols across network sizes.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated node counts.
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SWEEP_SIZES)]
        sizes: Vec<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("manetsim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run {
            common,
            protocol,
            trace,
        } => {
            let reports = cmd_run(&RunArgs {
                scenario: &common.scenario,
                protocol,
                seeds: &common.seeds,
                out: &common.out,
                trace,
            })?;
            println!(
                "{:>8} {:>8} {:>9} {:>10} {:>12}",
                "seed", "protocol", "pdr_%", "delay_s", "thrpt_bps"
            );
            for r in &reports {
                println!(
                    "{:>8} {:>8} {:>9} {:>10} {:>12}",
                    r.meta.seed,
                    r.meta.protocol,
                    fmt_g(r.pdr),
                    fmt_opt(r.mean_delay),
                    fmt_g(r.throughput)
                );
            }
        }
        Command::Compare { common, trace } => {
            let table = cmd_compare(&RunArgs {
                scenario: &common.scenario,
                protocol: None,
                seeds: &common.seeds,
                out: &common.out,
                trace,
            })?;
            println!(
                "{:>8} {:>10} {:>10} {:>10}",
                "seed", "d_pdr", "d_delay", "d_thrpt"
            );
            for row in &table.rows {
                println!(
                    "{:>8} {:>10} {:>10} {:>10}",
                    row.seed,
                    fmt_g(row.delta_pdr()),
                    fmt_opt(row.delta_delay()),
                    fmt_g(row.delta_throughput())
                );
            }
            println!(
                "{:>8} {:>10} {:>10} {:>10}",
                "mean",
                fmt_g(table.mean_delta_pdr),
                fmt_opt(table.mean_delta_delay),
                fmt_g(table.mean_delta_throughput)
            );
        }
        Command::Sweep { common, sizes } => {
            let reports = cmd_sweep(&SweepArgs {
                scenario: &common.scenario,
                sizes: &sizes,
                seeds: &common.seeds,
                out: &common.out,
            })?;
            println!("{} runs written to {}", reports.len(), common.out.display());
        }
    }
    Ok(())
}
