use clap::Args;

use thermobin_core::binning::Binning;
use thermobin_core::fisher::{binned_fisher, thermal_fisher};

use super::Output;
use crate::args::{ModelArgs, SolverArgs};
use crate::error::CliResult;
use crate::table::{Cell, Table};

pub const COLUMNS: &[&str] = &["beta", "T", "F", "C", "D", "ratio", "bins", "converged"];

/// Thermal Fisher information, and the coarse-grained split for a given binning or bin count.
#[derive(Debug, Args)]
#[command(after_help = "CSV columns: beta, T, F, C, D, ratio, bins, converged\n\
C, D, ratio, bins and converged are blank unless --d or --cuts is given.")]
pub struct FisherArgs {
    #[command(flatten)]
    pub model: ModelArgs,

    /// Number of bins, optimized
    #[arg(long, conflicts_with = "cuts")]
    pub d: Option<usize>,

    /// Explicit bin boundaries (comma-separated, increasing)
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub cuts: Vec<f64>,

    #[command(flatten)]
    pub solver: SolverArgs,
}

pub fn run(args: &FisherArgs, seed: u64) -> CliResult<Output> {
    let (source, beta) = args.model.resolve()?;
    let ensemble = source.ensemble(beta)?;
    let mut table = Table::new("fisher", COLUMNS);
    let head: Vec<Cell> = vec![beta.into(), (1.0 / beta).into(), thermal_fisher(&ensemble).into()];
    let (report, bins, converged) = if let Some(d) = args.d {
        let solved = args.solver.solve(&ensemble, d, seed)?;
        (Some(solved.outcome.report), Some(d), Some(solved.converged))
    } else if !args.cuts.is_empty() {
        let binning = Binning::new(args.cuts.clone())?;
        (Some(binned_fisher(&ensemble, &binning)?), Some(binning.num_bins()), None)
    } else {
        (None, None, None)
    };
    let mut row = head;
    row.extend([
        report.as_ref().map(|r| r.coarse_fisher).into(),
        report.as_ref().map(|r| r.distortion).into(),
        report.as_ref().map(|r| r.ratio).into(),
        bins.into(),
        converged.into(),
    ]);
    table.push(row);
    let mut out = Output::from(table);
    out.unconverged = converged == Some(false);
    Ok(out)
}
