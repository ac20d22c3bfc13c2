use std::path::PathBuf;

use clap::Args;
use rayon::prelude::*;
use serde::Deserialize;

use thermobin_core::probe::{jc_excited_probability, probe_efficiency, JcProbeSpec, ProbeConfig, DEFAULT_GT_MAX};

use super::Output;
use crate::args::{linspace, read, GridArgs};
use crate::error::{config, CliResult};
use crate::table::{Cell, Table};

const COLUMNS: &[&str] = &[
    "beta_omega", "T", "delta", "gt_opt", "p_e", "probe_fisher", "binary_fisher", "ratio",
];
const FLOOR_COLUMNS: &[&str] = &["min_ratio", "beta_omega_at_min", "floor", "points", "pass"];

/// Lowest ratio of optimized probe to optimal binary measurement that the floor check accepts.
pub const RATIO_FLOOR: f64 = 0.45;
/// Default `beta omega_a` grid for sweeps and the floor check.
pub const DEFAULT_GRID: (f64, f64, usize) = (2.0, 0.1, 20);

#[derive(Debug, Deserialize)]
struct ProbeFile {
    probe: ProbeConfig,
}

/// Qubit probe coupled to a thermal mode: optimal interaction time and its Fisher information.
#[derive(Debug, Args)]
#[command(after_help = "CSV columns:\n  \
default, --sweep-temperature:  beta_omega, T, delta, gt_opt, p_e, probe_fisher, binary_fisher, ratio\n  \
--ratio-floor-check:           min_ratio, beta_omega_at_min, floor, points, pass\n\
beta_omega is beta * omega_a and T = 1 / beta; ratio compares the probe with the best two-outcome energy \
measurement of the mode. The temperature grid defaults to beta_omega from 2 down to 0.1 (20 points), so rows run \
from cold to hot.")]
pub struct ProbeArgs {
    /// Probe config JSON: {"probe": {"omega_d": ..., "omega_a": ..., "g": ..., "gt_max": ...}}
    #[arg(long, conflicts_with_all = ["omega_a", "g", "delta", "gt_max"])]
    pub config: Option<PathBuf>,

    /// Mode frequency
    #[arg(long)]
    pub omega_a: Option<f64>,

    /// Coupling
    #[arg(long)]
    pub g: Option<f64>,

    /// Detuning omega_d - omega_a
    #[arg(long, allow_hyphen_values = true)]
    pub delta: Option<f64>,

    /// Upper end of the optimal-time search, in units of 1/g
    #[arg(long)]
    pub gt_max: Option<f64>,

    /// beta * omega_a for a single evaluation
    #[arg(long, default_value_t = 1.0)]
    pub beta_omega: f64,

    /// Evaluate over a grid of beta * omega_a (--values or --from/--to/--steps)
    #[arg(long, conflicts_with = "ratio_floor_check")]
    pub sweep_temperature: bool,

    /// Check that the probe keeps at least 45% of the optimal binary information over the grid
    #[arg(long)]
    pub ratio_floor_check: bool,

    #[command(flatten)]
    pub grid: GridArgs,
}

impl ProbeArgs {
    fn probe_config(&self) -> CliResult<ProbeConfig> {
        if let Some(path) = &self.config {
            let file: ProbeFile =
                serde_json::from_str(&read(path)?).map_err(|e| config(format!("{}: {e}", path.display())))?;
            return Ok(file.probe);
        }
        let omega_a = self.omega_a.unwrap_or(1.0);
        Ok(ProbeConfig {
            omega_d: omega_a + self.delta.unwrap_or(0.0),
            omega_a,
            g: self.g.unwrap_or(1.0),
            gt_max: self.gt_max.unwrap_or(DEFAULT_GT_MAX),
        })
    }
}

struct Point {
    beta_omega: f64,
    gt_opt: f64,
    p_e: f64,
    probe_fisher: f64,
    binary_fisher: f64,
    ratio: f64,
}

fn evaluate(cfg: &ProbeConfig, spec: &JcProbeSpec, beta_omega: f64) -> CliResult<Point> {
    let beta = beta_omega / cfg.omega_a;
    let eff = probe_efficiency(beta, spec, cfg.gt_max)?;
    Ok(Point {
        beta_omega,
        gt_opt: eff.gt_opt,
        p_e: jc_excited_probability(beta, &spec.with_gt(eff.gt_opt))?,
        probe_fisher: eff.probe_fisher,
        binary_fisher: eff.binary_fisher,
        ratio: eff.ratio,
    })
}

pub fn run(args: &ProbeArgs) -> CliResult<Output> {
    let cfg = args.probe_config()?;
    let spec = cfg.spec();
    let grid = if args.sweep_temperature || args.ratio_floor_check {
        let (a, b, n) = DEFAULT_GRID;
        let default = linspace(a, b, n);
        if args.grid.values.is_empty() && args.grid.from.is_none() {
            default
        } else {
            args.grid.points(None)?
        }
    } else {
        vec![args.beta_omega]
    };
    let points: Vec<CliResult<Point>> = grid.par_iter().map(|&b| evaluate(&cfg, &spec, b)).collect();
    let points: Vec<Point> = points.into_iter().collect::<CliResult<_>>()?;

    if args.ratio_floor_check {
        let worst = points
            .iter()
            .min_by(|a, b| a.ratio.total_cmp(&b.ratio))
            .ok_or_else(|| config("empty temperature grid"))?;
        let pass = worst.ratio >= RATIO_FLOOR;
        let mut table = Table::new("probe", FLOOR_COLUMNS);
        table.push(vec![
            worst.ratio.into(),
            worst.beta_omega.into(),
            RATIO_FLOOR.into(),
            points.len().into(),
            pass.into(),
        ]);
        let mut out = Output::from(table);
        if !pass {
            out.failed_check = Some(format!(
                "probe ratio {} at beta omega_a = {} is below {RATIO_FLOOR}",
                worst.ratio, worst.beta_omega
            ));
        }
        return Ok(out);
    }

    let delta = cfg.omega_d - cfg.omega_a;
    let mut table = Table::new("probe", COLUMNS);
    for p in &points {
        let row: Vec<Cell> = vec![
            p.beta_omega.into(),
            (cfg.omega_a / p.beta_omega).into(),
            delta.into(),
            p.gt_opt.into(),
            p.p_e.into(),
            p.probe_fisher.into(),
            p.binary_fisher.into(),
            p.ratio.into(),
        ];
        table.push(row);
    }
    Ok(table.into())
}
