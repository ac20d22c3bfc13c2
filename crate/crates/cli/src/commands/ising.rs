use std::path::PathBuf;

use clap::{Args, ValueEnum};
use rayon::prelude::*;

use thermobin_core::ising2d::{
    critical_beta, criticality_binning_study, cumulant_scaling_fit, default_cache_dir, exact_dos, load_many,
    CumulantEvaluator, IsingDos, ScalingObservable,
};

use super::Output;
use crate::args::GridArgs;
use crate::error::{config, CliResult};
use crate::table::{float_list, Cell, Table};

const CUMULANT_COLUMNS: &[&str] = &[
    "L", "N", "beta", "kappa1", "kappa2", "kappa3", "kappa4", "d", "F", "C", "D", "ratio",
];
const FIT_COLUMNS: &[&str] = &["observable", "exponent", "intercept", "r_squared", "sizes", "abscissa", "values"];
const DOS_COLUMNS: &[&str] = &["L", "E", "g"];
const VERIFY_COLUMNS: &[&str] = &["L", "levels", "mismatches", "pass"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitName {
    Kappa2,
    Kappa4,
    Kappa3PeakBelow,
    Kappa3PeakAbove,
    PeakOffsetBelow,
    PeakOffsetAbove,
    All,
}

impl FitName {
    fn observables(self) -> Vec<ScalingObservable> {
        match self {
            FitName::Kappa2 => vec![ScalingObservable::Kappa2],
            FitName::Kappa4 => vec![ScalingObservable::Kappa4],
            FitName::Kappa3PeakBelow => vec![ScalingObservable::Kappa3PeakBelow],
            FitName::Kappa3PeakAbove => vec![ScalingObservable::Kappa3PeakAbove],
            FitName::PeakOffsetBelow => vec![ScalingObservable::PeakOffsetBelow],
            FitName::PeakOffsetAbove => vec![ScalingObservable::PeakOffsetAbove],
            FitName::All => vec![
                ScalingObservable::Kappa2,
                ScalingObservable::Kappa4,
                ScalingObservable::Kappa3PeakBelow,
                ScalingObservable::Kappa3PeakAbove,
                ScalingObservable::PeakOffsetBelow,
                ScalingObservable::PeakOffsetAbove,
            ],
        }
    }
}

/// Exact density of states of the periodic L x L Ising model: cumulants, scaling fits and binning at criticality.
#[derive(Debug, Args)]
#[command(after_help = "CSV columns:\n  \
default, --scan:         L, N, beta, kappa1, kappa2, kappa3, kappa4, d, F, C, D, ratio\n  \
--fit:                   observable, exponent, intercept, r_squared, sizes, abscissa, values\n  \
--dos:                   L, E, g\n  \
--verify-enumeration:    L, levels, mismatches, pass\n\
Densities of states are cached as JSON in --cache-dir, else $THERMOBIN_CACHE_DIR, else the system temp dir.")]
pub struct IsingArgs {
    /// Lattice side
    #[arg(long = "L", conflicts_with = "sizes")]
    pub size: Option<usize>,

    /// Several lattice sides, comma-separated
    #[arg(long, value_delimiter = ',')]
    pub sizes: Vec<usize>,

    /// Inverse temperature, or "critical"
    #[arg(long, default_value = "critical")]
    pub beta: String,

    /// Also report the optimal d-bin energy measurement
    #[arg(long)]
    pub d: Option<usize>,

    /// Compare the L = 4 density of states with all 2^16 configurations
    #[arg(long)]
    pub verify_enumeration: bool,

    /// Size-scaling fit at --beta (peak observables scan around the critical point)
    #[arg(long, value_enum, value_delimiter = ',')]
    pub fit: Vec<FitName>,

    /// Emit the density of states itself
    #[arg(long)]
    pub dos: bool,

    /// Cumulants over a grid of inverse temperatures (--values or --from/--to/--steps)
    #[arg(long)]
    pub scan: bool,

    #[command(flatten)]
    pub grid: GridArgs,

    /// Cache directory for densities of states
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
}

fn parse_beta(text: &str) -> CliResult<f64> {
    if text.eq_ignore_ascii_case("critical") {
        return Ok(critical_beta());
    }
    text.parse().map_err(|_| config(format!("--beta must be a number or \"critical\", got {text:?}")))
}

pub fn run(args: &IsingArgs) -> CliResult<Output> {
    let sizes: Vec<usize> = match args.size {
        Some(l) => vec![l],
        None if !args.sizes.is_empty() => args.sizes.clone(),
        None => return Err(config("give --L or --sizes")),
    };
    if args.verify_enumeration {
        return verify(&sizes);
    }
    let beta = parse_beta(&args.beta)?;
    let dir = args.cache_dir.clone().unwrap_or_else(default_cache_dir);
    let dos = load_many(&sizes, Some(&dir))?;
    if !args.fit.is_empty() {
        return fits(args, &dos, beta);
    }
    if args.dos {
        return dump(&dos);
    }
    let betas = if args.scan {
        let c = critical_beta();
        args.grid.points(Some((0.5 * c, 1.5 * c, 101)))?
    } else {
        vec![beta]
    };
    let jobs: Vec<(&IsingDos, f64)> = dos.iter().flat_map(|d| betas.iter().map(move |&b| (d, b))).collect();
    let rows: Vec<CliResult<Vec<Cell>>> = jobs.par_iter().map(|&(d, b)| cumulant_row(d, b, args.d)).collect();
    let mut table = Table::new("ising", CUMULANT_COLUMNS);
    for row in rows {
        table.push(row?);
    }
    Ok(table.into())
}

fn cumulant_row(dos: &IsingDos, beta: f64, bins: Option<usize>) -> CliResult<Vec<Cell>> {
    let k = CumulantEvaluator::new(dos).at(beta);
    let report = bins.map(|d| criticality_binning_study(dos, beta, d)).transpose()?;
    Ok(vec![
        dos.size().into(),
        dos.sites().into(),
        beta.into(),
        k.kappa1.into(),
        k.kappa2.into(),
        k.kappa3.into(),
        k.kappa4.into(),
        bins.into(),
        report.as_ref().map(|r| r.thermal_fisher).into(),
        report.as_ref().map(|r| r.coarse_fisher).into(),
        report.as_ref().map(|r| r.distortion).into(),
        report.as_ref().map(|r| r.ratio).into(),
    ])
}

fn fits(args: &IsingArgs, dos: &[IsingDos], beta: f64) -> CliResult<Output> {
    let mut observables: Vec<ScalingObservable> = args.fit.iter().flat_map(|f| f.observables()).collect();
    observables.dedup();
    let mut table = Table::new("ising", FIT_COLUMNS);
    for obs in observables {
        let fit = cumulant_scaling_fit(dos, obs, Some(beta))?;
        let sizes: Vec<f64> = fit.sizes.iter().map(|&l| l as f64).collect();
        table.push(vec![
            obs.name().into(),
            fit.exponent.into(),
            fit.intercept.into(),
            fit.r_squared.into(),
            float_list(&sizes),
            float_list(&fit.abscissa),
            float_list(&fit.values),
        ]);
    }
    Ok(table.into())
}

fn dump(dos: &[IsingDos]) -> CliResult<Output> {
    let mut table = Table::new("ising", DOS_COLUMNS);
    for d in dos {
        for (e, g) in d.levels() {
            table.push(vec![d.size().into(), e.into(), g.to_string().into()]);
        }
    }
    let mut out = Output::from(table);
    if let [single] = dos {
        out.document = Some(serde_json::from_str(&single.to_json_string()?).map_err(thermobin_core::Error::from)?);
    }
    Ok(out)
}

fn verify(sizes: &[usize]) -> CliResult<Output> {
    let mut table = Table::new("ising", VERIFY_COLUMNS);
    let mut failed = Vec::new();
    for &l in sizes {
        if l != 4 {
            return Err(config("enumeration is only feasible for L = 4"));
        }
        let exact = exact_dos(l)?;
        let counts = enumerate(l);
        let n = (l * l) as i64;
        let mismatches = counts
            .iter()
            .enumerate()
            .filter(|&(j, &c)| exact.degeneracy(-2 * n + 4 * j as i64).to_string() != c.to_string())
            .count();
        let levels = counts.iter().filter(|&&c| c > 0).count();
        if mismatches > 0 {
            failed.push(format!("L = {l}: {mismatches} energies differ from enumeration"));
        }
        table.push(vec![l.into(), levels.into(), mismatches.into(), (mismatches == 0).into()]);
    }
    let mut out = Output::from(table);
    out.failed_check = (!failed.is_empty()).then(|| failed.join("; "));
    Ok(out)
}

/// Configuration counts by energy slot `(E + 2N) / 4` over all `2^N` spin states.
fn enumerate(l: usize) -> Vec<u64> {
    let n = l * l;
    let mut counts = vec![0u64; n + 1];
    for state in 0u64..(1 << n) {
        let spin = |r: usize, c: usize| if state >> ((r % l) * l + c % l) & 1 == 1 { 1i64 } else { -1 };
        let mut energy = 0i64;
        for r in 0..l {
            for c in 0..l {
                energy -= spin(r, c) * (spin(r, c + 1) + spin(r + 1, c));
            }
        }
        counts[((energy + 2 * n as i64) / 4) as usize] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumeration_totals() {
        let counts = enumerate(4);
        assert_eq!(counts.iter().sum::<u64>(), 1 << 16);
        assert_eq!(counts[0], 2);
        assert_eq!(counts[1], 0);
    }

    #[test]
    fn beta_parsing() {
        assert_eq!(parse_beta("critical").unwrap(), critical_beta());
        assert_eq!(parse_beta("0.3").unwrap(), 0.3);
        assert!(parse_beta("hot").is_err());
    }
}
