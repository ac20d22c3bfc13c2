use clap::{Args, ValueEnum};
use rayon::prelude::*;

use thermobin_core::binning::Binning;
use thermobin_core::fisher::binned_fisher;
use thermobin_core::probe::{jc_excited_probability, mode_binary_fisher, probe_efficiency, JcEvaluator, JcProbeSpec};
use thermobin_core::{Model, ThermalEnsemble};

use super::Output;
use crate::args::{integral, GridArgs, ModelArgs, ModelName, SolverArgs, Source};
use crate::error::{config, CliResult};
use crate::table::{float_list, Cell, Table};

const MODEL_COLUMNS: &[&str] = &["variable", "value", "d", "beta", "F", "C", "D", "ratio", "cuts", "converged"];
const GRID_COLUMNS: &[&str] = &["variable", "value", "beta", "F", "C", "D", "ratio"];
const PROBE_COLUMNS: &[&str] = &[
    "variable", "value", "beta", "delta", "gt", "p_e", "probe_fisher", "binary_fisher", "ratio",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepVar {
    /// number of bins
    #[value(name = "d")]
    Bins,
    /// inverse temperature
    Beta,
    /// system size of n-qubits, tight-binding or four-peak
    #[value(name = "N")]
    Size,
    /// position of a single cut (d = 2)
    BGrid,
    /// number of bosonic modes
    #[value(name = "M")]
    Modes,
    /// probe detuning, optimal interaction time at each point
    Delta,
    /// probe interaction time in units of 1/g
    Gt,
}

/// Long-format parameter sweeps, one row per grid point in grid order.
#[derive(Debug, Args)]
#[command(after_help = "CSV columns:\n  \
d, beta, N, M:  variable, value, d, beta, F, C, D, ratio, cuts, converged\n  \
b-grid:         variable, value, beta, F, C, D, ratio\n  \
delta, gt:      variable, value, beta, delta, gt, p_e, probe_fisher, binary_fisher, ratio\n\
cuts lists the optimal boundaries separated by ';'. The d sweep defaults to d = 2..8.")]
pub struct SweepArgs {
    /// Swept variable
    #[arg(long = "var", value_enum)]
    pub variable: SweepVar,

    #[command(flatten)]
    pub grid: GridArgs,

    #[command(flatten)]
    pub model: ModelArgs,

    /// Number of bins when d is not swept
    #[arg(long, default_value_t = 2)]
    pub d: usize,

    #[command(flatten)]
    pub solver: SolverArgs,

    /// Probe coupling
    #[arg(long, default_value_t = 1.0)]
    pub g: f64,

    /// Probe detuning omega_d - omega_a
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub delta: f64,

    /// Upper end of the optimal-time search, in units of 1/g
    #[arg(long, default_value_t = std::f64::consts::PI)]
    pub gt_max: f64,
}

type Row = (Vec<Cell>, bool);

pub fn run(args: &SweepArgs, seed: u64) -> CliResult<Output> {
    let default = (args.variable == SweepVar::Bins).then_some((2.0, 8.0, 7));
    let values = args.grid.points(default)?;
    let name = args.variable.to_possible_value().map(|v| v.get_name().to_owned()).unwrap_or_default();
    let (columns, rows): (&'static [&'static str], Vec<CliResult<Row>>) = match args.variable {
        SweepVar::Bins => {
            let (source, beta) = args.model.resolve()?;
            let ensemble = source.ensemble(beta)?;
            let ds = integral(&values, "d")?;
            let rows = ds
                .par_iter()
                .map(|&d| model_row(&name, d as f64, beta, d, &ensemble, args, seed))
                .collect();
            (MODEL_COLUMNS, rows)
        }
        SweepVar::Beta => {
            let (source, _) = args.model.resolve()?;
            let rows = values
                .par_iter()
                .map(|&beta| {
                    let ensemble = source.ensemble(beta)?;
                    model_row(&name, beta, beta, args.d, &ensemble, args, seed)
                })
                .collect();
            (MODEL_COLUMNS, rows)
        }
        SweepVar::Size | SweepVar::Modes => {
            let kind = args.model.model.ok_or_else(|| config("this sweep needs --model"))?;
            let beta = args.model.beta.unwrap_or(crate::args::DEFAULT_BETA);
            let sizes = integral(&values, &name)?;
            let rows = sizes
                .par_iter()
                .map(|&size| {
                    let model = resized(&args.model, kind, args.variable, size)?;
                    let ensemble = Source::Model(model).ensemble(beta)?;
                    model_row(&name, size as f64, beta, args.d, &ensemble, args, seed)
                })
                .collect();
            (MODEL_COLUMNS, rows)
        }
        SweepVar::BGrid => {
            let (source, beta) = args.model.resolve()?;
            let ensemble = source.ensemble(beta)?;
            let rows = values
                .par_iter()
                .map(|&b| {
                    let report = binned_fisher(&ensemble, &Binning::new(vec![b])?)?;
                    Ok((
                        vec![
                            name.as_str().into(),
                            b.into(),
                            beta.into(),
                            report.thermal_fisher.into(),
                            report.coarse_fisher.into(),
                            report.distortion.into(),
                            report.ratio.into(),
                        ],
                        true,
                    ))
                })
                .collect();
            (GRID_COLUMNS, rows)
        }
        SweepVar::Delta | SweepVar::Gt => {
            let beta = args.model.beta.unwrap_or(crate::args::DEFAULT_BETA);
            let rows = values.par_iter().map(|&v| probe_row(&name, v, beta, args)).collect();
            (PROBE_COLUMNS, rows)
        }
    };
    let mut table = Table::new("sweep", columns);
    let mut unconverged = false;
    for row in rows {
        let (cells, converged) = row?;
        unconverged |= !converged;
        table.push(cells);
    }
    let mut out = Output::from(table);
    out.unconverged = unconverged;
    Ok(out)
}

fn model_row(
    name: &str,
    value: f64,
    beta: f64,
    d: usize,
    ensemble: &ThermalEnsemble,
    args: &SweepArgs,
    seed: u64,
) -> CliResult<Row> {
    let solved = args.solver.solve(ensemble, d, seed)?;
    let r = &solved.outcome.report;
    Ok((
        vec![
            name.into(),
            value.into(),
            d.into(),
            beta.into(),
            r.thermal_fisher.into(),
            r.coarse_fisher.into(),
            r.distortion.into(),
            r.ratio.into(),
            float_list(solved.outcome.binning.cuts()),
            solved.converged.into(),
        ],
        solved.converged,
    ))
}

fn resized(model: &ModelArgs, kind: ModelName, variable: SweepVar, size: usize) -> CliResult<Model> {
    let mut args = model.clone();
    match (variable, kind) {
        (SweepVar::Size, ModelName::NQubits | ModelName::TightBinding | ModelName::FourPeak) => args.size = Some(size),
        (SweepVar::Modes, ModelName::BosonicModes) => args.modes = Some(size),
        (SweepVar::Size, _) => return Err(config("an N sweep needs n-qubits, tight-binding or four-peak")),
        _ => return Err(config("an M sweep needs bosonic-modes")),
    }
    args.model = Some(kind);
    Ok(args.resolve_model()?.0)
}

fn probe_row(name: &str, value: f64, beta: f64, args: &SweepArgs) -> CliResult<Row> {
    let omega_a = args.model.omega_a;
    let delta = if args.variable == SweepVar::Delta { value } else { args.delta };
    let spec = JcProbeSpec {
        omega_d: omega_a + delta,
        omega_a,
        g: args.g,
        gt: 0.0,
        n_max: None,
    };
    let (gt, p_e, probe_fisher, binary) = if args.variable == SweepVar::Delta {
        let eff = probe_efficiency(beta, &spec, args.gt_max)?;
        let p = jc_excited_probability(beta, &spec.with_gt(eff.gt_opt))?;
        (eff.gt_opt, p, eff.probe_fisher, eff.binary_fisher)
    } else {
        let f = JcEvaluator::new(beta, &spec)?.fisher(value);
        (value, f.probability, f.value, mode_binary_fisher(beta, omega_a)?)
    };
    Ok((
        vec![
            name.into(),
            value.into(),
            beta.into(),
            delta.into(),
            gt.into(),
            p_e.into(),
            probe_fisher.into(),
            binary.into(),
            (probe_fisher / binary).into(),
        ],
        true,
    ))
}
