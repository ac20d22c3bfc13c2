use clap::Args;

use super::Output;
use crate::args::{ModelArgs, SolverArgs};
use crate::error::CliResult;
use crate::table::Table;

pub const COLUMNS: &[&str] = &[
    "bin", "b_lower", "b", "p", "eps", "C", "F", "D", "ratio", "solver", "iterations", "residual", "starts", "converged",
];

/// Optimal bin boundaries for a d-outcome energy measurement.
#[derive(Debug, Args)]
#[command(after_help = "CSV columns: bin, b_lower, b, p, eps, C, F, D, ratio, solver, iterations, residual, starts, converged\n\
One row per bin; b is the upper boundary, eps the bin energy. The report and solver columns repeat on every row.\n\
Exit code 4 means the solver hit --max-iters; the best partial result is still written.")]
pub struct BinArgs {
    #[command(flatten)]
    pub model: ModelArgs,

    /// Number of bins
    #[arg(long)]
    pub d: usize,

    #[command(flatten)]
    pub solver: SolverArgs,
}

pub fn run(args: &BinArgs, seed: u64) -> CliResult<Output> {
    let (source, beta) = args.model.resolve()?;
    let ensemble = source.ensemble(beta)?;
    let solved = args.solver.solve(&ensemble, args.d, seed)?;
    let outcome = &solved.outcome;
    let edges = outcome.binning.boundaries();
    let p = outcome.binning.probabilities(&ensemble)?;
    let eps = outcome.binning.bin_energies(&ensemble)?;
    let best = outcome.record.best();
    let solver = serde_json::to_value(outcome.record.mode)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default();
    let mut table = Table::new("bin", COLUMNS);
    for k in 0..outcome.binning.num_bins() {
        table.push(vec![
            k.into(),
            edges[k].into(),
            edges[k + 1].into(),
            p[k].into(),
            eps[k].into(),
            outcome.report.coarse_fisher.into(),
            outcome.report.thermal_fisher.into(),
            outcome.report.distortion.into(),
            outcome.report.ratio.into(),
            solver.clone().into(),
            best.iterations.into(),
            best.residual.into(),
            outcome.record.starts.len().into(),
            solved.converged.into(),
        ]);
    }
    let mut out = Output::from(table);
    out.unconverged = !solved.converged;
    Ok(out)
}
