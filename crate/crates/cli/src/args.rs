use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};

use thermobin_core::binning::{solve, Binning, SolverConfig, SolverMode, SolverOutcome};
use thermobin_core::fisher::binned_fisher;
use thermobin_core::models::{build_ensemble, Model, ModelSpec, TIGHT_BINDING_RESOLUTION};
use thermobin_core::{ConvergenceRecord, Error as CoreError, Spectrum, StartRecord, ThermalEnsemble};

use crate::error::{config, CliResult};

pub const DEFAULT_BETA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelName {
    Gaussian,
    LinearDos,
    NQubits,
    TightBinding,
    BosonicModes,
    FourPeak,
}

/// Where the energy spectrum comes from: a built-in model, a spectrum file or a model config file.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Built-in model
    #[arg(long, value_enum, conflicts_with_all = ["spectrum", "config"])]
    pub model: Option<ModelName>,

    /// Spectrum JSON file ("levels", "dos" or "dos_kernel")
    #[arg(long, conflicts_with = "config")]
    pub spectrum: Option<PathBuf>,

    /// Model config JSON: {"model": {"kind": ..., "params": {...}}, "beta": ...}
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Inverse temperature [default: 1, or the config file's value]
    #[arg(long)]
    pub beta: Option<f64>,

    /// Number of qubits, sites or particles
    #[arg(long = "N")]
    pub size: Option<usize>,

    /// Gaussian mean energy
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub mean: f64,

    /// Gaussian width
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,

    /// Tight-binding on-site energy
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub eps_onsite: f64,

    /// Tight-binding hopping
    #[arg(long, default_value_t = 0.3)]
    pub t_hop: f64,

    /// Tight-binding grid points across the energy range
    #[arg(long, default_value_t = TIGHT_BINDING_RESOLUTION)]
    pub grid_resolution: usize,

    /// Number of bosonic modes
    #[arg(long = "M")]
    pub modes: Option<usize>,

    /// Mode frequency
    #[arg(long, default_value_t = 1.0)]
    pub omega_a: f64,

    /// Occupation cutoff per mode (chosen from the tail bound when absent)
    #[arg(long)]
    pub n_max: Option<usize>,

    /// Four-peak splitting
    #[arg(long, default_value_t = 1.0)]
    pub eps: f64,

    /// Four-peak coupling
    #[arg(long, default_value_t = 1.0)]
    pub t_peak: f64,
}

/// Spectrum source resolved from the flags.
#[derive(Debug, Clone)]
pub enum Source {
    Model(Model),
    Spectrum(Spectrum),
}

impl ModelArgs {
    fn model_named(&self, name: ModelName, size: Option<usize>) -> CliResult<Model> {
        let need_size = || size.ok_or_else(|| config("this model needs --N"));
        Ok(match name {
            ModelName::Gaussian => Model::GaussianDos {
                mean: self.mean,
                sigma: self.sigma,
            },
            ModelName::LinearDos => Model::LinearDos {},
            ModelName::NQubits => Model::NQubits { n: need_size()? },
            ModelName::TightBinding => Model::TightBinding {
                n: need_size()?,
                eps_onsite: self.eps_onsite,
                t_hop: self.t_hop,
                grid_resolution: self.grid_resolution,
            },
            ModelName::BosonicModes => Model::BosonicModes {
                m: self.modes.ok_or_else(|| config("bosonic-modes needs --M"))?,
                omega_a: self.omega_a,
                n_max: self.n_max,
            },
            ModelName::FourPeak => Model::FourPeak {
                n: need_size()?,
                eps: self.eps,
                t_peak: self.t_peak,
            },
        })
    }

    /// Resolves the spectrum source and the inverse temperature.
    pub fn resolve(&self) -> CliResult<(Source, f64)> {
        let (source, file_beta) = match (&self.model, &self.spectrum, &self.config) {
            (Some(name), None, None) => (Source::Model(self.model_named(*name, self.size)?), None),
            (None, Some(path), None) => (Source::Spectrum(Spectrum::from_json_str(&read(path)?)?), None),
            (None, None, Some(path)) => {
                let spec: ModelSpec = serde_json::from_str(&read(path)?)
                    .map_err(|e| config(format!("{}: {e}", path.display())))?;
                (Source::Model(spec.model), Some(spec.beta))
            }
            (None, None, None) => return Err(config("one of --model, --spectrum or --config is required")),
            _ => return Err(config("--model, --spectrum and --config are mutually exclusive")),
        };
        Ok((source, self.beta.or(file_beta).unwrap_or(DEFAULT_BETA)))
    }

    /// The built-in model only; file spectra are rejected.
    pub fn resolve_model(&self) -> CliResult<(Model, f64)> {
        match self.resolve()? {
            (Source::Model(model), beta) => Ok((model, beta)),
            (Source::Spectrum(_), _) => Err(config("this command needs a built-in model, not a spectrum file")),
        }
    }
}

impl Source {
    pub fn ensemble(&self, beta: f64) -> CliResult<ThermalEnsemble> {
        Ok(match self {
            Source::Model(model) => build_ensemble(model, beta)?,
            Source::Spectrum(spectrum) => ThermalEnsemble::new(spectrum.clone(), beta)?,
        })
    }
}

pub fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| config(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverChoice {
    /// dp-exact on discrete spectra, lloyd-max otherwise
    Auto,
    LloydMax,
    DpExact,
    BruteForce,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Binning algorithm
    #[arg(long, value_enum, default_value_t = SolverChoice::Auto)]
    pub solver: SolverChoice,

    /// Lloyd-Max iteration cap per start
    #[arg(long, default_value_t = SolverConfig::default().max_iters)]
    pub max_iters: usize,

    /// Lloyd-Max midpoint tolerance relative to the energy spread
    #[arg(long, default_value_t = SolverConfig::default().rel_tol)]
    pub rel_tol: f64,

    /// Lloyd-Max starts (quantiles plus jittered restarts)
    #[arg(long, default_value_t = SolverConfig::default().num_starts)]
    pub starts: usize,
}

/// Optimal binning plus whether the solver converged.
pub struct Solved {
    pub outcome: SolverOutcome,
    pub converged: bool,
}

impl SolverArgs {
    pub fn config(&self, ensemble: &ThermalEnsemble, bins: usize, seed: u64) -> SolverConfig {
        let mode = match self.solver {
            SolverChoice::Auto if ensemble.discrete().is_some() => SolverMode::DpExact,
            SolverChoice::Auto | SolverChoice::LloydMax => SolverMode::LloydMax,
            SolverChoice::DpExact => SolverMode::DpExact,
            SolverChoice::BruteForce => SolverMode::BruteForce,
        };
        SolverConfig {
            bins,
            max_iters: self.max_iters,
            rel_tol: self.rel_tol,
            num_starts: self.starts,
            mode,
            seed,
        }
    }

    /// Solves for `bins` outcomes; a single bin is the trivial measurement.
    pub fn solve(&self, ensemble: &ThermalEnsemble, bins: usize, seed: u64) -> CliResult<Solved> {
        let cfg = self.config(ensemble, bins, seed);
        if bins == 1 {
            let binning = Binning::trivial();
            let report = binned_fisher(ensemble, &binning)?;
            let record = ConvergenceRecord {
                mode: cfg.mode,
                starts: vec![StartRecord {
                    start: 0,
                    iterations: 0,
                    residual: 0.0,
                    converged: true,
                    reseeds: 0,
                    coarse_fisher: report.coarse_fisher,
                }],
                best_start: 0,
            };
            return Ok(Solved {
                outcome: SolverOutcome {
                    binning,
                    report,
                    record,
                },
                converged: true,
            });
        }
        match solve(ensemble, &cfg) {
            Ok(outcome) => Ok(Solved {
                outcome,
                converged: true,
            }),
            Err(CoreError::NoConvergence(partial)) => Ok(Solved {
                outcome: *partial,
                converged: false,
            }),
            Err(e) => Err(e.into()),
        }
    }
}

/// Explicit values or an evenly spaced range.
#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// Comma-separated grid values
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with_all = ["from", "to"])]
    pub values: Vec<f64>,

    /// First grid value
    #[arg(long, allow_hyphen_values = true, requires = "to")]
    pub from: Option<f64>,

    /// Last grid value
    #[arg(long, allow_hyphen_values = true, requires = "from")]
    pub to: Option<f64>,

    /// Number of grid points between --from and --to
    #[arg(long, default_value_t = 21)]
    pub steps: usize,
}

impl GridArgs {
    pub fn points(&self, default: Option<(f64, f64, usize)>) -> CliResult<Vec<f64>> {
        if !self.values.is_empty() {
            return Ok(self.values.clone());
        }
        let (from, to, steps) = match (self.from, self.to, default) {
            (Some(a), Some(b), _) => (a, b, self.steps),
            (None, None, Some(d)) => d,
            _ => return Err(config("give --values or --from/--to")),
        };
        Ok(linspace(from, to, steps))
    }
}

pub fn linspace(from: f64, to: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![from],
        _ => (0..steps).map(|k| from + (to - from) * k as f64 / (steps - 1) as f64).collect(),
    }
}

/// Integer grid values, rejecting fractions.
pub fn integral(values: &[f64], what: &str) -> CliResult<Vec<usize>> {
    values
        .iter()
        .map(|&v| {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(config(format!("{what} values must be nonnegative integers, got {v}")))
            }
        })
        .collect()
}
