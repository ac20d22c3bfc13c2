//! Optimal coarse-grained temperature measurements.
//!
//! A thermal state's temperature is best estimated by measuring its energy; this
//! crate quantifies how much of that information survives when the energy is only
//! resolved into a few bins, finds the best bins, and evaluates the loss across
//! several model families.

pub mod binning;
pub mod error;
pub mod estimation;
pub mod fisher;
pub mod ising2d;
pub mod models;
pub mod probe;
pub mod quadrature;
pub mod spectra;
pub mod special;

pub use binning::{
    brute_force, dp_exact, lloyd_max, ratio_landscape, solve, Binning, BruteForceOptimum, ConvergenceRecord,
    SolverConfig, SolverMode, SolverOutcome, StartRecord,
};
pub use error::{Error, Result};
pub use fisher::{
    binned_fisher, povm_fisher, proportionality_bound, tail_second_moment, thermal_fisher, DiagonalPovm,
    FisherReport,
};
pub use spectra::{
    BinMoments, ContinuousDos, Degeneracy, DiscreteSpectrum, EnergyDistribution, Spectrum, TabulatedDos,
    ThermalEnsemble,
};
pub use estimation::{cramer_rao_report, mle_temperature, sample_outcomes, CramerRaoReport, ExperimentSpec};
pub use ising2d::{critical_beta, critical_temperature, cumulants, exact_dos, CumulantReport, IsingDos};
pub use models::{build_ensemble, Model, ModelSpec};
pub use probe::{IdealProbeSpec, JcProbeSpec};
