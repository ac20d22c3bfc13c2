//! `thermobin`: optimal coarse-grained energy measurements for thermometry.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod args;
mod commands;
mod error;
mod table;

use commands::{bin, estimate, fisher, ising, probe, sweep, Output};
use error::{CliError, CliResult};
use table::{round_json, Format};

#[derive(Debug, Parser)]
#[command(name = "thermobin", version, about = "Optimal coarse-grained temperature measurements")]
struct Cli {
    /// Write results here instead of standard output
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    /// Output format
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,

    /// Seed for solver restarts and simulations
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    Fisher(fisher::FisherArgs),
    Bin(bin::BinArgs),
    Sweep(sweep::SweepArgs),
    Ising(ising::IsingArgs),
    Probe(probe::ProbeArgs),
    Estimate(estimate::EstimateArgs),
}

fn execute(cli: &Cli) -> CliResult<Output> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| error::config(format!("--threads: {e}")))?;
    }
    match &cli.command {
        Command::Fisher(a) => fisher::run(a, cli.seed),
        Command::Bin(a) => bin::run(a, cli.seed),
        Command::Sweep(a) => sweep::run(a, cli.seed),
        Command::Ising(a) => ising::run(a),
        Command::Probe(a) => probe::run(a),
        Command::Estimate(a) => estimate::run(a, cli.seed),
    }
}

fn emit(cli: &Cli, output: &Output) -> CliResult<()> {
    let mut sink: Box<dyn Write> = match &cli.output {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    match cli.format {
        Format::Csv => output.table.write_csv(&mut sink)?,
        Format::Json => {
            let doc = output.document.clone().unwrap_or_else(|| round_json(output.table.to_json()));
            serde_json::to_writer_pretty(&mut sink, &doc).map_err(io::Error::other)?;
            writeln!(sink)?;
        }
    }
    sink.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = execute(&cli).and_then(|output| {
        emit(&cli, &output)?;
        if let Some(msg) = output.failed_check {
            return Err(CliError::CheckFailed(msg));
        }
        if output.unconverged {
            eprintln!("thermobin: solver did not converge within --max-iters; output is the best partial result");
            return Ok(4);
        }
        Ok(0)
    });
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("thermobin: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
