//! Energy spectra, densities of states and thermal ensembles over them.

use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate, ABS_TOL, REL_TOL};
use crate::special::{gamma_interval_int, norm_interval, norm_pdf, z_norm_pdf};

/// Multiplicity of a discrete level: an exact state count or a positive real weight.
#[derive(Debug, Clone, PartialEq)]
pub enum Degeneracy {
    Count(BigUint),
    Weight(f64),
    /// Natural log of a weight too large or small for `f64`.
    LogWeight(f64),
}

impl Degeneracy {
    pub fn ln(&self) -> f64 {
        match self {
            Degeneracy::Count(g) => ln_biguint(g),
            Degeneracy::Weight(w) => w.ln(),
            Degeneracy::LogWeight(lw) => *lw,
        }
    }

    fn is_positive(&self) -> bool {
        match self {
            Degeneracy::Count(g) => !g.is_zero(),
            Degeneracy::Weight(w) => w.is_finite() && *w > 0.0,
            Degeneracy::LogWeight(lw) => lw.is_finite(),
        }
    }

    fn merge(self, other: Degeneracy) -> Degeneracy {
        match (self, other) {
            (Degeneracy::Count(a), Degeneracy::Count(b)) => Degeneracy::Count(a + b),
            (a, b) => Degeneracy::LogWeight(crate::special::log_add_exp(a.ln(), b.ln())),
        }
    }
}

impl From<u64> for Degeneracy {
    fn from(g: u64) -> Self {
        Degeneracy::Count(BigUint::from(g))
    }
}

/// Natural log of a big integer without overflowing `f64`.
pub fn ln_biguint(g: &BigUint) -> f64 {
    let bits = g.bits();
    if bits <= 1000 {
        return g.to_f64().unwrap_or(f64::INFINITY).ln();
    }
    let shift = bits - 64;
    let top = (g >> shift).to_f64().unwrap_or(f64::INFINITY);
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

/// Sorted discrete spectrum with tied energies merged.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSpectrum {
    energies: Vec<f64>,
    degeneracies: Vec<Degeneracy>,
    log_weights: Vec<f64>,
}

impl DiscreteSpectrum {
    pub fn new(levels: Vec<(f64, Degeneracy)>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidSpectrum("no levels".into()));
        }
        let mut levels = levels;
        for (e, g) in &levels {
            if !e.is_finite() {
                return Err(Error::InvalidSpectrum(format!("non-finite energy {e}")));
            }
            if !g.is_positive() {
                return Err(Error::InvalidSpectrum(format!("level at E = {e} has nonpositive degeneracy")));
            }
        }
        levels.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut energies: Vec<f64> = Vec::with_capacity(levels.len());
        let mut degeneracies: Vec<Degeneracy> = Vec::with_capacity(levels.len());
        for (e, g) in levels {
            if energies.last() == Some(&e) {
                let prev = degeneracies.pop().expect("parallel vectors");
                degeneracies.push(prev.merge(g));
            } else {
                energies.push(e);
                degeneracies.push(g);
            }
        }
        let dimension_ok = energies.len() >= 2
            || matches!(&degeneracies[0], Degeneracy::Count(g) if *g >= BigUint::from(2u8));
        if !dimension_ok {
            return Err(Error::InvalidSpectrum("total dimension must be at least 2".into()));
        }
        let log_weights = degeneracies.iter().map(Degeneracy::ln).collect();
        Ok(Self {
            energies,
            degeneracies,
            log_weights,
        })
    }

    /// Levels with integer degeneracies.
    pub fn from_counts<I: IntoIterator<Item = (f64, BigUint)>>(levels: I) -> Result<Self> {
        Self::new(levels.into_iter().map(|(e, g)| (e, Degeneracy::Count(g))).collect())
    }

    /// Levels with real positive weights (relative masses).
    pub fn from_weights<I: IntoIterator<Item = (f64, f64)>>(levels: I) -> Result<Self> {
        Self::new(levels.into_iter().map(|(e, w)| (e, Degeneracy::Weight(w))).collect())
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn degeneracies(&self) -> &[Degeneracy] {
        &self.degeneracies
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    /// Number of distinct energies.
    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }
}

/// Tabulated density of states, linear between grid nodes and zero outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedDos {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl TabulatedDos {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() < 3 || grid.len() != values.len() {
            return Err(Error::InvalidSpectrum(
                "tabulated DOS needs at least 3 grid points and one value per point".into(),
            ));
        }
        if grid.iter().any(|x| !x.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSpectrum("grid must be finite and strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidSpectrum("DOS values must be finite and nonnegative".into()));
        }
        if values.iter().all(|v| *v == 0.0) {
            return Err(Error::InvalidSpectrum("DOS vanishes everywhere".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, e: f64) -> f64 {
        let n = self.grid.len();
        if e < self.grid[0] || e > self.grid[n - 1] {
            return 0.0;
        }
        let j = segment_index(&self.grid, e);
        let (x0, x1) = (self.grid[j], self.grid[j + 1]);
        let t = (e - x0) / (x1 - x0);
        self.values[j] * (1.0 - t) + self.values[j + 1] * t
    }
}

/// Index of the grid segment containing `e`, clamped to valid segments.
fn segment_index(grid: &[f64], e: f64) -> usize {
    let k = grid.partition_point(|&x| x <= e);
    k.saturating_sub(1).min(grid.len() - 2)
}

/// Continuous density of states.
#[derive(Debug, Clone, PartialEq)]
pub enum ContinuousDos {
    /// `Omega(E) ∝ E` on `[0, inf)`.
    Linear,
    /// `Omega(E) ∝ exp(-(E - mean)^2 / 2 sigma^2)` on the real line.
    Gaussian { mean: f64, sigma: f64 },
    Tabulated(TabulatedDos),
}

impl ContinuousDos {
    pub fn gaussian(mean: f64, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) || !mean.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "gaussian DOS needs finite mean and sigma > 0 (got mean = {mean}, sigma = {sigma})"
            )));
        }
        Ok(ContinuousDos::Gaussian { mean, sigma })
    }

    /// Whether the partition function diverges as `beta -> 0`.
    fn diverges_at_infinite_temperature(&self) -> bool {
        matches!(self, ContinuousDos::Linear)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Spectrum {
    Discrete(DiscreteSpectrum),
    Continuous(ContinuousDos),
}

impl From<DiscreteSpectrum> for Spectrum {
    fn from(s: DiscreteSpectrum) -> Self {
        Spectrum::Discrete(s)
    }
}

impl From<ContinuousDos> for Spectrum {
    fn from(d: ContinuousDos) -> Self {
        Spectrum::Continuous(d)
    }
}

/// Mass and first two moments about the ensemble mean over an energy interval.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BinMoments {
    pub mass: f64,
    /// `∫ (E - <H>) q(E) dE` over the interval.
    pub first: f64,
    /// `∫ (E - <H>)^2 q(E) dE` over the interval.
    pub second: f64,
}

impl BinMoments {
    /// Variance of the energy restricted to the interval, times its mass.
    pub fn within_variance(&self) -> f64 {
        if self.mass > 0.0 {
            (self.second - self.first * self.first / self.mass).max(0.0)
        } else {
            0.0
        }
    }
}

/// Normalized energy distribution: point masses or a sampled density.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnergyDistribution {
    Masses { energies: Vec<f64>, masses: Vec<f64> },
    Density { grid: Vec<f64>, density: Vec<f64> },
}

#[derive(Debug, Clone)]
struct DiscreteState {
    q: Vec<f64>,
}

#[derive(Debug, Clone)]
struct TabulatedState {
    /// `ln Z` offset applied to the unnormalized density.
    shift: f64,
    norm: f64,
    prefix_mass: Vec<f64>,
    prefix_first: Vec<f64>,
    prefix_second: Vec<f64>,
}

#[derive(Debug, Clone)]
enum State {
    Discrete(DiscreteState),
    Linear,
    Gaussian { center: f64, sigma: f64 },
    Tabulated(TabulatedState),
}

/// A spectrum held at inverse temperature `beta`.
#[derive(Debug, Clone)]
pub struct ThermalEnsemble {
    spectrum: Arc<Spectrum>,
    beta: f64,
    ln_z: f64,
    mean: f64,
    variance: f64,
    state: State,
}

impl ThermalEnsemble {
    pub fn new(spectrum: impl Into<Spectrum>, beta: f64) -> Result<Self> {
        Self::from_shared(Arc::new(spectrum.into()), beta)
    }

    pub fn from_shared(spectrum: Arc<Spectrum>, beta: f64) -> Result<Self> {
        if !beta.is_finite() || beta < 0.0 {
            return Err(Error::InvalidParameter(format!("beta must be finite and >= 0, got {beta}")));
        }
        match spectrum.as_ref() {
            Spectrum::Discrete(s) => Ok(discrete_ensemble(spectrum.clone(), s, beta)),
            Spectrum::Continuous(dos) => {
                if beta == 0.0 && dos.diverges_at_infinite_temperature() {
                    return Err(Error::DivergentPartitionFunction(
                        "beta = 0 on an unbounded density of states".into(),
                    ));
                }
                match dos {
                    ContinuousDos::Linear => Ok(Self {
                        spectrum: spectrum.clone(),
                        beta,
                        ln_z: -2.0 * beta.ln(),
                        mean: 2.0 / beta,
                        variance: 2.0 / (beta * beta),
                        state: State::Linear,
                    }),
                    &ContinuousDos::Gaussian { mean, sigma } => {
                        let center = mean - beta * sigma * sigma;
                        let ln_z = (sigma * (2.0 * std::f64::consts::PI).sqrt()).ln() - beta * mean
                            + 0.5 * beta * beta * sigma * sigma;
                        Ok(Self {
                            spectrum: spectrum.clone(),
                            beta,
                            ln_z,
                            mean: center,
                            variance: sigma * sigma,
                            state: State::Gaussian { center, sigma },
                        })
                    }
                    ContinuousDos::Tabulated(tab) => tabulated_ensemble(spectrum.clone(), tab, beta),
                }
            }
        }
    }

    /// Same spectrum at a different inverse temperature.
    pub fn at_beta(&self, beta: f64) -> Result<Self> {
        Self::from_shared(self.spectrum.clone(), beta)
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    pub fn shared_spectrum(&self) -> Arc<Spectrum> {
        self.spectrum.clone()
    }

    pub fn discrete(&self) -> Option<&DiscreteSpectrum> {
        match self.spectrum.as_ref() {
            Spectrum::Discrete(s) => Some(s),
            Spectrum::Continuous(_) => None,
        }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn temperature(&self) -> f64 {
        1.0 / self.beta
    }

    pub fn partition_function(&self) -> f64 {
        self.ln_z.exp()
    }

    pub fn ln_partition_function(&self) -> f64 {
        self.ln_z
    }

    pub fn mean_energy(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// Level probabilities `q_i` for discrete spectra.
    pub fn level_probabilities(&self) -> Option<&[f64]> {
        match &self.state {
            State::Discrete(d) => Some(&d.q),
            _ => None,
        }
    }

    /// `[<H>, mu_2, ..., mu_k]`: the raw mean followed by central moments.
    pub fn energy_moments(&self, max_order: usize) -> Result<Vec<f64>> {
        if max_order == 0 {
            return Err(Error::InvalidParameter("max_order must be at least 1".into()));
        }
        let mut out = Vec::with_capacity(max_order);
        out.push(self.mean);
        for k in 2..=max_order {
            out.push(self.central_moment(k as i32)?);
        }
        Ok(out)
    }

    fn central_moment(&self, k: i32) -> Result<f64> {
        let mu = self.mean;
        match (&self.state, self.spectrum.as_ref()) {
            (State::Discrete(d), Spectrum::Discrete(s)) => Ok(s
                .energies
                .iter()
                .zip(&d.q)
                .map(|(e, q)| q * (e - mu).powi(k))
                .sum()),
            (State::Gaussian { sigma, .. }, _) => {
                if k % 2 == 1 {
                    Ok(0.0)
                } else {
                    let double_factorial: f64 = (1..k).step_by(2).map(f64::from).product();
                    Ok(sigma.powi(k) * double_factorial)
                }
            }
            (State::Linear, _) => {
                // raw moments of the Gamma(2, 1/beta) law are (j + 1)! / beta^j
                let b = self.beta;
                let mut total = 0.0;
                let mut raw = 1.0;
                for j in 0..=k {
                    if j > 0 {
                        raw *= (j + 1) as f64 / b;
                    }
                    total += binomial(k as u32, j as u32) * raw * (-mu).powi(k - j);
                }
                Ok(total)
            }
            (State::Tabulated(t), Spectrum::Continuous(ContinuousDos::Tabulated(tab))) => {
                let mut total = 0.0;
                for w in tab.grid.windows(2) {
                    total += integrate(
                        &|e: f64| self.tabulated_density(t, tab, e) * (e - mu).powi(k),
                        w[0],
                        w[1],
                        ABS_TOL * 1e-3,
                        REL_TOL,
                    )?;
                }
                Ok(total)
            }
            _ => unreachable!("ensemble state matches its spectrum"),
        }
    }

    /// Normalized density `q(E)`; zero for discrete spectra between levels.
    pub fn density(&self, e: f64) -> f64 {
        match (&self.state, self.spectrum.as_ref()) {
            (State::Linear, _) => {
                if e < 0.0 {
                    0.0
                } else {
                    self.beta * self.beta * e * (-self.beta * e).exp()
                }
            }
            (&State::Gaussian { center, sigma }, _) => norm_pdf((e - center) / sigma) / sigma,
            (State::Tabulated(t), Spectrum::Continuous(ContinuousDos::Tabulated(tab))) => {
                self.tabulated_density(t, tab, e)
            }
            _ => 0.0,
        }
    }

    fn tabulated_density(&self, t: &TabulatedState, tab: &TabulatedDos, e: f64) -> f64 {
        let omega = tab.eval(e);
        if omega == 0.0 {
            0.0
        } else {
            omega * (-self.beta * e - t.shift).exp() / t.norm
        }
    }

    /// Point masses, or the density sampled on `points` nodes across the effective support.
    pub fn energy_distribution(&self, points: usize) -> EnergyDistribution {
        match (&self.state, self.spectrum.as_ref()) {
            (State::Discrete(d), Spectrum::Discrete(s)) => EnergyDistribution::Masses {
                energies: s.energies.clone(),
                masses: d.q.clone(),
            },
            (State::Tabulated(_), Spectrum::Continuous(ContinuousDos::Tabulated(tab))) if points == 0 => {
                EnergyDistribution::Density {
                    grid: tab.grid.clone(),
                    density: tab.grid.iter().map(|&e| self.density(e)).collect(),
                }
            }
            _ => {
                let (lo, hi) = self.effective_support();
                let n = points.max(3);
                let grid: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
                let density = grid.iter().map(|&e| self.density(e)).collect();
                EnergyDistribution::Density { grid, density }
            }
        }
    }

    /// Finite interval holding all but a negligible fraction of the distribution.
    pub fn effective_support(&self) -> (f64, f64) {
        match (&self.state, self.spectrum.as_ref()) {
            (State::Discrete(_), Spectrum::Discrete(s)) => (s.energies[0], s.energies[s.len() - 1]),
            // x e^{1-x} drops below 1e-16 of its peak near x = 43
            (State::Linear, _) => (0.0, 43.0 / self.beta),
            // exp(-z^2/2) < 1e-16 beyond |z| = 8.6
            (&State::Gaussian { center, sigma }, _) => (center - 8.6 * sigma, center + 8.6 * sigma),
            (_, Spectrum::Continuous(ContinuousDos::Tabulated(tab))) => (tab.grid[0], tab.grid[tab.grid.len() - 1]),
            _ => unreachable!("ensemble state matches its spectrum"),
        }
    }

    /// Moments of the distribution restricted to `[lo, hi)`.
    pub fn interval_moments(&self, lo: f64, hi: f64) -> Result<BinMoments> {
        if !(hi > lo) {
            return Ok(BinMoments::default());
        }
        let mu = self.mean;
        match (&self.state, self.spectrum.as_ref()) {
            (State::Discrete(d), Spectrum::Discrete(s)) => {
                let i = s.energies.partition_point(|&e| e < lo);
                let j = s.energies.partition_point(|&e| e < hi);
                let mut m = BinMoments::default();
                for k in i..j {
                    let x = s.energies[k] - mu;
                    m.mass += d.q[k];
                    m.first += d.q[k] * x;
                    m.second += d.q[k] * x * x;
                }
                Ok(m)
            }
            (State::Linear, _) => {
                let b = self.beta;
                let (xa, xb) = ((b * lo).max(0.0), (b * hi).max(0.0));
                let mass = gamma_interval_int(2, xa, xb);
                let raw1 = 2.0 / b * gamma_interval_int(3, xa, xb);
                let raw2 = 6.0 / (b * b) * gamma_interval_int(4, xa, xb);
                Ok(BinMoments {
                    mass,
                    first: raw1 - mu * mass,
                    second: (raw2 - 2.0 * mu * raw1 + mu * mu * mass).max(0.0),
                })
            }
            (&State::Gaussian { sigma, .. }, _) => {
                // the ensemble mean is the center of the normal law
                let za = (lo - mu) / sigma;
                let zb = (hi - mu) / sigma;
                let mass = norm_interval(za, zb);
                Ok(BinMoments {
                    mass,
                    first: sigma * (norm_pdf(za) - norm_pdf(zb)),
                    second: sigma * sigma * (mass + z_norm_pdf(za) - z_norm_pdf(zb)),
                })
            }
            (State::Tabulated(t), Spectrum::Continuous(ContinuousDos::Tabulated(tab))) => {
                self.tabulated_interval(t, tab, lo, hi)
            }
            _ => unreachable!("ensemble state matches its spectrum"),
        }
    }

    fn tabulated_interval(&self, t: &TabulatedState, tab: &TabulatedDos, lo: f64, hi: f64) -> Result<BinMoments> {
        let g = &tab.grid;
        let lo = lo.max(g[0]);
        let hi = hi.min(g[g.len() - 1]);
        if !(hi > lo) {
            return Ok(BinMoments::default());
        }
        let mu = self.mean;
        let partial = |a: f64, b: f64| -> Result<BinMoments> {
            if !(b > a) {
                return Ok(BinMoments::default());
            }
            let q = |e: f64| self.tabulated_density(t, tab, e);
            Ok(BinMoments {
                mass: integrate(&q, a, b, ABS_TOL * 1e-3, REL_TOL)?,
                first: integrate(&|e: f64| q(e) * (e - mu), a, b, ABS_TOL * 1e-3, REL_TOL)?,
                second: integrate(&|e: f64| q(e) * (e - mu) * (e - mu), a, b, ABS_TOL * 1e-3, REL_TOL)?,
            })
        };
        let ja = segment_index(g, lo);
        let jb = segment_index(g, hi);
        if ja == jb {
            return partial(lo, hi);
        }
        let head = partial(lo, g[ja + 1])?;
        let tail = partial(g[jb], hi)?;
        let span = |p: &[f64]| p[jb] - p[ja + 1];
        Ok(BinMoments {
            mass: head.mass + span(&t.prefix_mass) + tail.mass,
            first: head.first + span(&t.prefix_first) + tail.first,
            second: head.second + span(&t.prefix_second) + tail.second,
        })
    }

    /// Cumulative distribution `P(E < x)`.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        Ok(self.interval_moments(f64::NEG_INFINITY, x)?.mass)
    }

    /// Smallest `x` with `P(E < x) >= p`, by bisection over the effective support.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        let (mut lo, mut hi) = self.effective_support();
        if let Some(s) = self.discrete() {
            let q = self.level_probabilities().expect("discrete");
            let mut acc = 0.0;
            for (e, qi) in s.energies.iter().zip(q) {
                acc += qi;
                if acc >= p {
                    return Ok(*e);
                }
            }
            return Ok(s.energies[s.len() - 1]);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid)? < p {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-14 * (1.0 + mid.abs()) {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn discrete_ensemble(spectrum: Arc<Spectrum>, s: &DiscreteSpectrum, beta: f64) -> ThermalEnsemble {
    let exponents: Vec<f64> = s
        .log_weights
        .iter()
        .zip(&s.energies)
        .map(|(lw, e)| lw - beta * e)
        .collect();
    let top = exponents.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = exponents.iter().map(|a| (a - top).exp()).sum();
    let ln_z = top + sum.ln();
    let q: Vec<f64> = exponents.iter().map(|a| (a - top).exp() / sum).collect();
    let mean: f64 = q.iter().zip(&s.energies).map(|(q, e)| q * e).sum();
    let variance = q.iter().zip(&s.energies).map(|(q, e)| q * (e - mean).powi(2)).sum();
    ThermalEnsemble {
        spectrum,
        beta,
        ln_z,
        mean,
        variance,
        state: State::Discrete(DiscreteState { q }),
    }
}

fn tabulated_ensemble(spectrum: Arc<Spectrum>, tab: &TabulatedDos, beta: f64) -> Result<ThermalEnsemble> {
    let shift = tab
        .grid
        .iter()
        .zip(&tab.values)
        .filter(|(_, v)| **v > 0.0)
        .map(|(e, v)| v.ln() - beta * e)
        .fold(f64::NEG_INFINITY, f64::max);
    let raw = |e: f64| {
        let omega = tab.eval(e);
        if omega == 0.0 {
            0.0
        } else {
            omega * (-beta * e - shift).exp()
        }
    };
    let nseg = tab.grid.len() - 1;
    let mut seg_mass = Vec::with_capacity(nseg);
    let mut seg_raw1 = Vec::with_capacity(nseg);
    for w in tab.grid.windows(2) {
        seg_mass.push(integrate(&raw, w[0], w[1], 0.0, REL_TOL)?);
        seg_raw1.push(integrate(&|e: f64| raw(e) * e, w[0], w[1], 0.0, REL_TOL)?);
    }
    let norm: f64 = seg_mass.iter().sum();
    let mean = seg_raw1.iter().sum::<f64>() / norm;
    let mut prefix_mass = vec![0.0; nseg + 1];
    let mut prefix_first = vec![0.0; nseg + 1];
    let mut prefix_second = vec![0.0; nseg + 1];
    for (j, w) in tab.grid.windows(2).enumerate() {
        let first = integrate(&|e: f64| raw(e) * (e - mean), w[0], w[1], 0.0, REL_TOL)? / norm;
        let second = integrate(&|e: f64| raw(e) * (e - mean).powi(2), w[0], w[1], 0.0, REL_TOL)? / norm;
        prefix_mass[j + 1] = prefix_mass[j] + seg_mass[j] / norm;
        prefix_first[j + 1] = prefix_first[j] + first;
        prefix_second[j + 1] = prefix_second[j] + second;
    }
    Ok(ThermalEnsemble {
        spectrum,
        beta,
        ln_z: shift + norm.ln(),
        mean,
        variance: prefix_second[nseg],
        state: State::Tabulated(TabulatedState {
            shift,
            norm,
            prefix_mass,
            prefix_first,
            prefix_second,
        }),
    })
}

// ---- spectrum file format ----

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum DegeneracyField {
    Text(String),
    Number(f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LevelRecord {
    #[serde(rename = "E")]
    energy: f64,
    g: DegeneracyField,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct KernelRecord {
    name: String,
    #[serde(default)]
    params: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpectrumFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    levels: Option<Vec<LevelRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dos: Option<TabulatedDos>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dos_kernel: Option<KernelRecord>,
}

impl Spectrum {
    /// Parse the JSON spectrum format: `levels`, `dos` or `dos_kernel`.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: SpectrumFile = serde_json::from_str(text)?;
        let given = [file.levels.is_some(), file.dos.is_some(), file.dos_kernel.is_some()];
        if given.iter().filter(|x| **x).count() != 1 {
            return Err(Error::InvalidSpectrum(
                "exactly one of \"levels\", \"dos\" or \"dos_kernel\" must be present".into(),
            ));
        }
        if let Some(levels) = file.levels {
            let parsed = levels
                .into_iter()
                .map(|rec| {
                    let g = match rec.g {
                        DegeneracyField::Text(s) => s
                            .trim()
                            .parse::<BigUint>()
                            .map(Degeneracy::Count)
                            .map_err(|_| Error::InvalidSpectrum(format!("bad degeneracy \"{s}\""))),
                        DegeneracyField::Number(w) => Ok(Degeneracy::Weight(w)),
                    }?;
                    Ok((rec.energy, g))
                })
                .collect::<Result<Vec<_>>>()?;
            return Ok(Spectrum::Discrete(DiscreteSpectrum::new(parsed)?));
        }
        if let Some(tab) = file.dos {
            return Ok(Spectrum::Continuous(ContinuousDos::Tabulated(TabulatedDos::new(
                tab.grid, tab.values,
            )?)));
        }
        let kernel = file.dos_kernel.expect("checked above");
        let param = |key: &str, default: Option<f64>| -> Result<f64> {
            match kernel.params.get(key) {
                Some(v) => v
                    .as_f64()
                    .ok_or_else(|| Error::InvalidSpectrum(format!("parameter \"{key}\" must be a number"))),
                None => default.ok_or_else(|| Error::InvalidSpectrum(format!("missing parameter \"{key}\""))),
            }
        };
        match kernel.name.as_str() {
            "linear" => Ok(Spectrum::Continuous(ContinuousDos::Linear)),
            "gaussian" => Ok(Spectrum::Continuous(ContinuousDos::gaussian(
                param("mean", Some(0.0))?,
                param("sigma", Some(1.0))?,
            )?)),
            other => Err(Error::InvalidSpectrum(format!("unknown DOS kernel \"{other}\""))),
        }
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let file = match self {
            Spectrum::Discrete(s) => SpectrumFile {
                levels: Some(
                    s.energies
                        .iter()
                        .zip(&s.degeneracies)
                        .map(|(e, g)| LevelRecord {
                            energy: *e,
                            g: match g {
                                Degeneracy::Count(c) => DegeneracyField::Text(c.to_string()),
                                Degeneracy::Weight(w) => DegeneracyField::Number(*w),
                                Degeneracy::LogWeight(lw) => DegeneracyField::Number(lw.exp()),
                            },
                        })
                        .collect(),
                ),
                ..Default::default()
            },
            Spectrum::Continuous(ContinuousDos::Tabulated(tab)) => SpectrumFile {
                dos: Some(tab.clone()),
                ..Default::default()
            },
            Spectrum::Continuous(ContinuousDos::Linear) => SpectrumFile {
                dos_kernel: Some(KernelRecord {
                    name: "linear".into(),
                    params: Default::default(),
                }),
                ..Default::default()
            },
            Spectrum::Continuous(ContinuousDos::Gaussian { mean, sigma }) => {
                let mut params = serde_json::Map::new();
                params.insert("mean".into(), (*mean).into());
                params.insert("sigma".into(), (*sigma).into());
                SpectrumFile {
                    dos_kernel: Some(KernelRecord {
                        name: "gaussian".into(),
                        params,
                    }),
                    ..Default::default()
                }
            }
        };
        serde_json::to_value(file).expect("spectrum serializes")
    }
}
