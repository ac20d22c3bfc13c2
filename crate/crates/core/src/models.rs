//! Model ensembles and their closed-form reference values.

use std::f64::consts::PI;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::binning::dp_exact;
use crate::error::{Error, Result};
use crate::fisher::binned_fisher;
use crate::special::{erf, erfc, expm1_minus_x};
use crate::spectra::{ContinuousDos, Degeneracy, DiscreteSpectrum, Spectrum, TabulatedDos, ThermalEnsemble};

/// Default number of grid steps spanning the tight-binding energy range.
pub const TIGHT_BINDING_RESOLUTION: usize = 1 << 14;
/// Largest neglected bosonic tail mass.
pub const TRUNCATION_TAIL: f64 = 1e-12;
/// Hard cap on the bosonic occupation cutoff.
pub const MAX_OCCUPATION: usize = 100_000;

/// A built-in model family with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum Model {
    /// `N` independent qubits with unit gap.
    NQubits {
        #[serde(rename = "N")]
        n: usize,
    },
    /// Density of states growing linearly from zero.
    LinearDos {},
    GaussianDos {
        #[serde(default)]
        mean: f64,
        #[serde(default = "unit")]
        sigma: f64,
    },
    /// Free fermions on a periodic ring, `eps_a = eps_onsite - t_hop cos(2 pi a / N)`.
    TightBinding {
        #[serde(rename = "N")]
        n: usize,
        eps_onsite: f64,
        t_hop: f64,
        #[serde(default = "default_resolution")]
        grid_resolution: usize,
    },
    /// `M` oscillators of equal frequency; `n_max` is chosen automatically when absent.
    BosonicModes {
        #[serde(rename = "M")]
        m: usize,
        omega_a: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n_max: Option<usize>,
    },
    /// Two central peaks at `±eps` and two outlying peaks at `±t_peak N`.
    FourPeak {
        #[serde(rename = "N")]
        n: usize,
        eps: f64,
        t_peak: f64,
    },
}

fn unit() -> f64 {
    1.0
}

fn default_resolution() -> usize {
    TIGHT_BINDING_RESOLUTION
}

/// A model together with the inverse temperature it is held at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model: Model,
    pub beta: f64,
}

impl ModelSpec {
    pub fn new(model: Model, beta: f64) -> Self {
        Self { model, beta }
    }

    pub fn build_ensemble(&self) -> Result<ThermalEnsemble> {
        build_ensemble(&self.model, self.beta)
    }
}

/// Spectrum of `model`; some spectra are constructed for a particular `beta`
/// (bosonic truncation, the four-peak masses).
pub fn build_spectrum(model: &Model, beta: f64) -> Result<Spectrum> {
    match *model {
        Model::NQubits { n } => Ok(n_qubit_spectrum(n)?.into()),
        Model::LinearDos {} => Ok(ContinuousDos::Linear.into()),
        Model::GaussianDos { mean, sigma } => Ok(ContinuousDos::gaussian(mean, sigma)?.into()),
        Model::TightBinding {
            n,
            eps_onsite,
            t_hop,
            grid_resolution,
        } => Ok(ContinuousDos::Tabulated(tight_binding_dos(n, eps_onsite, t_hop, grid_resolution, beta)?).into()),
        Model::BosonicModes { m, omega_a, n_max } => Ok(bosonic_spectrum(m, omega_a, beta, n_max)?.into()),
        Model::FourPeak { n, eps, t_peak } => Ok(four_peak_spectrum(n, eps, t_peak, beta)?.into()),
    }
}

pub fn build_ensemble(model: &Model, beta: f64) -> Result<ThermalEnsemble> {
    if !beta.is_finite() || beta < 0.0 {
        return Err(Error::InvalidParameter(format!("beta must be finite and >= 0, got {beta}")));
    }
    ThermalEnsemble::new(build_spectrum(model, beta)?, beta)
}

/// Levels `0..=N` with binomial degeneracies.
pub fn n_qubit_spectrum(n: usize) -> Result<DiscreteSpectrum> {
    if n == 0 {
        return Err(Error::InvalidParameter("number of qubits must be at least 1".into()));
    }
    let mut g = BigUint::from(1u8);
    let mut levels = Vec::with_capacity(n + 1);
    for j in 0..=n {
        levels.push((j as f64, Degeneracy::Count(g.clone())));
        g = g * BigUint::from(n - j) / BigUint::from(j + 1);
    }
    DiscreteSpectrum::new(levels)
}

/// Excited-state population `s = 1/(e^beta + 1)` of a unit-gap qubit.
pub fn qubit_excitation(beta: f64) -> f64 {
    1.0 / (beta.exp() + 1.0)
}

/// Single-particle energies of the periodic tight-binding ring.
pub fn tight_binding_modes(n: usize, eps_onsite: f64, t_hop: f64) -> Vec<f64> {
    (0..n)
        .map(|a| eps_onsite - t_hop * (2.0 * PI * a as f64 / n as f64).cos())
        .collect()
}

/// Density of states of the free-fermion ring, built by convolving the
/// per-mode occupation distributions on a uniform grid at `beta` and dividing
/// out the Boltzmann factor.
pub fn tight_binding_dos(n: usize, eps_onsite: f64, t_hop: f64, resolution: usize, beta: f64) -> Result<TabulatedDos> {
    if n == 0 {
        return Err(Error::InvalidParameter("chain length must be at least 1".into()));
    }
    if resolution < 16 {
        return Err(Error::InvalidParameter("grid resolution must be at least 16".into()));
    }
    if !(eps_onsite.is_finite() && t_hop.is_finite()) {
        return Err(Error::InvalidParameter("tight-binding parameters must be finite".into()));
    }
    let modes = tight_binding_modes(n, eps_onsite, t_hop);
    let scale: f64 = modes.iter().map(|e| e.abs()).sum();
    if scale == 0.0 {
        return Err(Error::InvalidParameter("all single-particle energies vanish".into()));
    }
    let step = scale / resolution as f64;
    let lowest: f64 = modes.iter().map(|e| e.min(0.0)).sum();
    let highest: f64 = modes.iter().map(|e| e.max(0.0)).sum();
    // each mode may push mass one node past its exact shift
    let pad = n as i64 + 2;
    let first_node = (lowest / step).floor() as i64 - pad;
    let last_node = (highest / step).ceil() as i64 + pad;
    let len = (last_node - first_node + 1) as usize;
    let mut mass = vec![0.0; len];
    mass[(-first_node) as usize] = 1.0;
    let mut next = vec![0.0; len];
    for &eps in &modes {
        let occupied = 1.0 / ((beta * eps).exp() + 1.0);
        let shift = eps / step;
        let whole = shift.floor() as i64;
        let frac = shift - whole as f64;
        next.iter_mut().for_each(|x| *x = 0.0);
        for (k, &m) in mass.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            next[k] += (1.0 - occupied) * m;
            let target = k as i64 + whole;
            // split the shifted mass between the two bracketing nodes
            if frac > 0.0 {
                next[target as usize] += occupied * (1.0 - frac) * m;
                next[(target + 1) as usize] += occupied * frac * m;
            } else {
                next[target as usize] += occupied * m;
            }
        }
        std::mem::swap(&mut mass, &mut next);
    }
    // Under the Boltzmann tilt each piecewise-linear hat has its mean pulled
    // down by the same amount; moving the nodes up compensates exactly.
    let offset = tilted_hat_offset(beta, step);
    let grid: Vec<f64> = (0..len).map(|k| (first_node + k as i64) as f64 * step + offset).collect();
    let reference: f64 = grid.iter().zip(&mass).map(|(e, m)| e * m).sum();
    let values: Vec<f64> = grid
        .iter()
        .zip(&mass)
        .map(|(e, &m)| {
            if m <= 0.0 {
                0.0
            } else {
                (m.ln() - step.ln() + beta * (e - reference)).exp()
            }
        })
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "tight-binding density of states overflows at this temperature".into(),
        ));
    }
    TabulatedDos::new(grid, values)
}

/// `-<u>` for the weight `(1 - |u|/h) e^{-beta u}` on `[-h, h]`.
fn tilted_hat_offset(beta: f64, h: f64) -> f64 {
    let x = 0.5 * beta * h;
    if x.abs() < 1e-3 {
        h * (x / 3.0 - x.powi(3) / 45.0)
    } else {
        h * (1.0 / x.tanh() - 1.0 / x)
    }
}

/// `(sum eps f, sum eps^2 f (1 - f))` with Fermi factors `f = 1/(e^{beta eps} + 1)`.
pub fn free_fermion_moments(modes: &[f64], beta: f64) -> (f64, f64) {
    modes.iter().fold((0.0, 0.0), |(mean, var), &e| {
        let f = 1.0 / ((beta * e).exp() + 1.0);
        (mean + e * f, var + e * e * f * (1.0 - f))
    })
}

/// Smallest cutoff whose neglected bosonic tail mass is below [`TRUNCATION_TAIL`],
/// with the certified tail bound at that cutoff.
pub fn bosonic_cutoff(modes: usize, beta_omega: f64) -> Result<(usize, f64)> {
    let x = (-beta_omega).exp();
    let mut n = 0;
    loop {
        let tail = negative_binomial_tail(modes, x, n);
        if tail < TRUNCATION_TAIL {
            return Ok((n, tail));
        }
        if n >= MAX_OCCUPATION {
            return Err(Error::TruncationInsufficient {
                n_max: n,
                tail_mass: tail,
            });
        }
        n += 1;
    }
}

/// Upper bound on `P(n > n_max)` for the total occupation of `modes` thermal
/// oscillators with Boltzmann ratio `x`.
pub fn negative_binomial_tail(modes: usize, x: f64, n_max: usize) -> f64 {
    let m = modes as f64;
    let k = (n_max + 1) as f64;
    // log pmf at n_max + 1
    let ln_pmf = ln_binomial(k + m - 1.0, m - 1.0) + k * x.ln() + m * (-x).ln_1p();
    let ratio = x * (k + m) / (k + 1.0);
    if ratio >= 1.0 {
        return 1.0;
    }
    (ln_pmf.exp() / (1.0 - ratio)).min(1.0)
}

fn ln_binomial(n: f64, k: f64) -> f64 {
    ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0)
}

fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Total-energy levels `n omega_a` of `M` equal oscillators with degeneracy
/// `C(n + M - 1, M - 1)`.
pub fn bosonic_spectrum(modes: usize, omega_a: f64, beta: f64, n_max: Option<usize>) -> Result<DiscreteSpectrum> {
    if modes == 0 {
        return Err(Error::InvalidParameter("number of modes must be at least 1".into()));
    }
    if !(omega_a > 0.0 && omega_a.is_finite()) {
        return Err(Error::InvalidParameter(format!("mode frequency must be positive, got {omega_a}")));
    }
    if !(beta > 0.0) {
        return Err(Error::DivergentPartitionFunction(
            "bosonic modes need beta > 0".into(),
        ));
    }
    let cutoff = match n_max {
        Some(n) => {
            let tail = negative_binomial_tail(modes, (-beta * omega_a).exp(), n);
            if tail >= TRUNCATION_TAIL {
                return Err(Error::TruncationInsufficient { n_max: n, tail_mass: tail });
            }
            n
        }
        None => bosonic_cutoff(modes, beta * omega_a)?.0,
    }
    .max(1);
    let mut g = BigUint::from(1u8);
    let mut levels = Vec::with_capacity(cutoff + 1);
    for n in 0..=cutoff {
        levels.push((n as f64 * omega_a, Degeneracy::Count(g.clone())));
        g = g * BigUint::from(n + modes) / BigUint::from(n + 1);
    }
    DiscreteSpectrum::new(levels)
}

/// Four point masses `1/2 - 1/N` at `±eps` and `1/N` at `±t_peak N`,
/// weighted so that they are the thermal probabilities at `beta`.
pub fn four_peak_spectrum(n: usize, eps: f64, t_peak: f64, beta: f64) -> Result<DiscreteSpectrum> {
    if n < 3 {
        return Err(Error::InvalidParameter(format!("four-peak model needs N >= 3, got {n}")));
    }
    if !(eps >= 0.0 && t_peak > 0.0) {
        return Err(Error::InvalidParameter("four-peak model needs eps >= 0 and t_peak > 0".into()));
    }
    let inner = 0.5 - 1.0 / n as f64;
    let outer = 1.0 / n as f64;
    let far = t_peak * n as f64;
    let mut levels = vec![(-far, outer), (far, outer)];
    if eps > 0.0 {
        levels.push((-eps, inner));
        levels.push((eps, inner));
    } else {
        levels.push((0.0, 2.0 * inner));
    }
    DiscreteSpectrum::new(
        levels
            .into_iter()
            .map(|(e, q)| (e, Degeneracy::LogWeight(q.ln() + beta * e)))
            .collect(),
    )
}

/// Two-bin `C/F` for Gaussian energy statistics with the boundary
/// `sqrt(2) b_tilde` standard deviations from the mean.
pub fn gaussian_binary_ratio(b_tilde: f64) -> f64 {
    let a = b_tilde.abs();
    if a.is_infinite() {
        return 0.0;
    }
    let tail = erfc(a);
    // 1 - erf^2 = erfc (2 - erfc) without cancellation
    let denom = tail * (2.0 - tail);
    if denom == 0.0 {
        return 0.0;
    }
    if a < 0.5 {
        return 2.0 / PI * (-2.0 * a * a).exp() / (1.0 - erf(a).powi(2));
    }
    2.0 / PI * (-2.0 * a * a).exp() / denom
}

/// Gaussian approximation of the two-bin ratio for `N` qubits with
/// excitation probability `s` and boundary `b`.
pub fn nqubit_large_n_ratio(n: usize, s: f64, b: f64) -> f64 {
    let n = n as f64;
    let r = 1.0 - s;
    gaussian_binary_ratio((n * s - b) / (2.0 * n * r * s).sqrt())
}

/// Two-bin coarse-grained Fisher information of the linear density of states
/// with the boundary at `b`.
pub fn linear_dos_binary_c(beta: f64, b: f64) -> f64 {
    let x = beta * b;
    if !(x > 0.0) {
        return 0.0;
    }
    if x > 700.0 {
        return 0.0;
    }
    beta * beta * x.powi(4) / ((1.0 + x) * expm1_minus_x(x))
}

/// Two-bin ratio of the four-peak model with the boundary at the mean energy.
pub fn four_peak_ratio(n: usize, eps: f64, t_peak: f64) -> f64 {
    let nf = n as f64;
    let lever = t_peak + eps * (0.5 - 1.0 / nf);
    4.0 * lever * lever / (2.0 * t_peak * t_peak * nf + (1.0 - 2.0 / nf) * eps * eps)
}

/// Optimal two-bin ratio for `M` equal oscillators at `beta omega_a`.
pub fn bosonic_modes_ratio(modes: usize, beta_omega: f64) -> Result<f64> {
    let spectrum = bosonic_spectrum(modes, 1.0, beta_omega, None)?;
    let ensemble = ThermalEnsemble::new(spectrum, beta_omega)?;
    let binning = dp_exact(&ensemble, 2)?;
    Ok(binned_fisher(&ensemble, &binning)?.ratio)
}
