//! Probe-based thermometry: an idealized binary-projection probe and a
//! qubit coupled to a thermal bosonic mode through a Jaynes-Cummings interaction.

use std::f64::consts::FRAC_PI_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binning::dp_exact;
use crate::error::{Error, Result};
use crate::fisher::binned_fisher;
use crate::models::{bosonic_spectrum, MAX_OCCUPATION, TRUNCATION_TAIL};
use crate::spectra::ThermalEnsemble;
use crate::special::golden_max;

/// Outcome probabilities closer than this to 0 or 1 carry no usable information.
pub const DEGENERATE_PROBABILITY: f64 = 1e-15;
/// Scan step of the measurement-time search, in units of `1/g`.
pub const TIME_SCAN_STEP: f64 = 1e-3;
pub const TIME_TOL: f64 = 1e-8;
/// Default upper end of the measurement-time window, in units of `1/g`.
pub const DEFAULT_GT_MAX: f64 = std::f64::consts::PI;
/// Allowed excess of a probe's Fisher information over the optimal binning.
pub const BOUND_SLACK: f64 = 1e-9;

/// Binary Fisher information of one outcome probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeFisher {
    pub value: f64,
    pub probability: f64,
    /// Set when the outcome is (numerically) certain and the value is reported as zero.
    pub degenerate: bool,
}

fn binary_fisher(p: f64, dp_dt: f64) -> ProbeFisher {
    if p <= DEGENERATE_PROBABILITY || p >= 1.0 - DEGENERATE_PROBABILITY {
        return ProbeFisher {
            value: 0.0,
            probability: p,
            degenerate: true,
        };
    }
    ProbeFisher {
        value: dp_dt * dp_dt / (p * (1.0 - p)),
        probability: p,
        degenerate: false,
    }
}

/// Probe that flips when the system energy is at least `threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdealProbeSpec {
    pub threshold: f64,
    pub coupling: f64,
    pub time: f64,
}

impl IdealProbeSpec {
    /// Interaction time giving a complete flip.
    pub fn full_flip(threshold: f64, coupling: f64) -> Self {
        Self {
            threshold,
            coupling,
            time: FRAC_PI_2 / coupling,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.coupling > 0.0 && self.time >= 0.0 && self.threshold.is_finite()) {
            return Err(Error::InvalidParameter(
                "ideal probe needs finite threshold, positive coupling and nonnegative time".into(),
            ));
        }
        Ok(())
    }
}

/// Probability of finding the ideal probe flipped.
pub fn ideal_probe_up_probability(ensemble: &ThermalEnsemble, spec: &IdealProbeSpec) -> Result<f64> {
    spec.validate()?;
    let flip = (spec.coupling * spec.time).sin().powi(2);
    let above = ensemble.interval_moments(spec.threshold, f64::INFINITY)?;
    Ok(flip * above.mass)
}

pub fn ideal_probe_fisher(ensemble: &ThermalEnsemble, spec: &IdealProbeSpec) -> Result<ProbeFisher> {
    spec.validate()?;
    let flip = (spec.coupling * spec.time).sin().powi(2);
    let above = ensemble.interval_moments(spec.threshold, f64::INFINITY)?;
    let beta = ensemble.beta();
    Ok(binary_fisher(flip * above.mass, flip * beta * beta * above.first))
}

/// Qubit probe resonantly exchanging excitations with a thermal mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JcProbeSpec {
    /// Probe qubit splitting.
    pub omega_d: f64,
    /// Mode frequency.
    pub omega_a: f64,
    pub g: f64,
    /// Interaction time in units of `1/g`.
    #[serde(default)]
    pub gt: f64,
    /// Occupation cutoff; chosen from the tail bound when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
}

impl JcProbeSpec {
    pub fn resonant(omega: f64, g: f64) -> Self {
        Self {
            omega_d: omega,
            omega_a: omega,
            g,
            gt: 0.0,
            n_max: None,
        }
    }

    pub fn detuning(&self) -> f64 {
        self.omega_d - self.omega_a
    }

    pub fn with_gt(mut self, gt: f64) -> Self {
        self.gt = gt;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.omega_a > 0.0 && self.omega_a.is_finite()) {
            return Err(Error::InvalidParameter(format!("mode frequency must be positive, got {}", self.omega_a)));
        }
        if !(self.g > 0.0 && self.g.is_finite() && self.omega_d.is_finite()) {
            return Err(Error::InvalidParameter("coupling must be positive and splittings finite".into()));
        }
        if !(self.gt >= 0.0 && self.gt.is_finite()) {
            return Err(Error::InvalidParameter(format!("interaction time must be >= 0, got {}", self.gt)));
        }
        Ok(())
    }
}

/// Probe configuration block as read from a config file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub omega_d: f64,
    pub omega_a: f64,
    pub g: f64,
    #[serde(default = "default_gt_max")]
    pub gt_max: f64,
}

fn default_gt_max() -> f64 {
    DEFAULT_GT_MAX
}

impl ProbeConfig {
    pub fn spec(&self) -> JcProbeSpec {
        JcProbeSpec {
            omega_d: self.omega_d,
            omega_a: self.omega_a,
            g: self.g,
            gt: 0.0,
            n_max: None,
        }
    }
}

/// Smallest cutoff `m` with neglected weight `P(n > m + 1) < 1e-12`.
pub fn jc_truncation(beta: f64, omega_a: f64) -> Result<usize> {
    let x = (-beta * omega_a).exp();
    if x <= 0.0 {
        return Ok(0);
    }
    // neglected mass is x^{m + 2}
    let needed = (TRUNCATION_TAIL.ln() / x.ln() - 2.0).max(0.0);
    let m = needed.floor() as usize;
    let m = if x.powf(m as f64 + 2.0) < TRUNCATION_TAIL { m } else { m + 1 };
    if m > MAX_OCCUPATION {
        return Err(Error::TruncationInsufficient {
            n_max: MAX_OCCUPATION,
            tail_mass: x.powf(MAX_OCCUPATION as f64 + 2.0),
        });
    }
    Ok(m)
}

/// Per-term data of the excited-state probability at fixed temperature.
#[derive(Debug, Clone)]
pub struct JcEvaluator {
    beta: f64,
    /// `P(n = m + 1)`.
    weights: Vec<f64>,
    /// `d/dT` of the weights.
    weight_slopes: Vec<f64>,
    /// `g^2 (m + 1) / lambda_m^2`.
    amplitudes: Vec<f64>,
    /// `lambda_m / g`.
    frequencies: Vec<f64>,
}

impl JcEvaluator {
    pub fn new(beta: f64, spec: &JcProbeSpec) -> Result<Self> {
        spec.validate()?;
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter(format!("beta must be positive and finite, got {beta}")));
        }
        let x = (-beta * spec.omega_a).exp();
        let cutoff = match spec.n_max {
            Some(m) => {
                let tail = x.powf(m as f64 + 2.0);
                if tail >= TRUNCATION_TAIL {
                    return Err(Error::TruncationInsufficient { n_max: m, tail_mass: tail });
                }
                m
            }
            None => jc_truncation(beta, spec.omega_a)?,
        };
        let occupation = x / (1.0 - x);
        let delta = spec.detuning();
        let g2 = spec.g * spec.g;
        let mut eval = Self {
            beta,
            weights: Vec::with_capacity(cutoff + 1),
            weight_slopes: Vec::with_capacity(cutoff + 1),
            amplitudes: Vec::with_capacity(cutoff + 1),
            frequencies: Vec::with_capacity(cutoff + 1),
        };
        let ln_head = (-x).ln_1p();
        for m in 0..=cutoff {
            let photons = (m + 1) as f64;
            let w = (ln_head - beta * spec.omega_a * photons).exp();
            let lambda2 = delta * delta / 4.0 + g2 * photons;
            eval.weights.push(w);
            eval.weight_slopes
                .push(beta * beta * spec.omega_a * (photons - occupation) * w);
            eval.amplitudes.push(g2 * photons / lambda2);
            eval.frequencies.push(lambda2.sqrt() / spec.g);
        }
        Ok(eval)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn cutoff(&self) -> usize {
        self.weights.len() - 1
    }

    /// `(P_e, dP_e/dT)` at interaction time `gt`.
    pub fn probability_and_slope(&self, gt: f64) -> (f64, f64) {
        let mut p = 0.0;
        let mut dp = 0.0;
        for m in 0..self.weights.len() {
            let s2 = (self.frequencies[m] * gt).sin().powi(2) * self.amplitudes[m];
            p += self.weights[m] * s2;
            dp += self.weight_slopes[m] * s2;
        }
        (p, dp)
    }

    pub fn fisher(&self, gt: f64) -> ProbeFisher {
        let (p, dp) = self.probability_and_slope(gt);
        binary_fisher(p, dp)
    }

    /// Best interaction time in `(0, gt_max]`: dense scan, then golden-section
    /// refinement around the best scan point. Equal values prefer the earlier time.
    pub fn optimal_time(&self, gt_max: f64) -> Result<OptimalTime> {
        if !(gt_max > 0.0 && gt_max.is_finite()) {
            return Err(Error::InvalidParameter(format!("gt_max must be positive, got {gt_max}")));
        }
        let steps = ((gt_max / TIME_SCAN_STEP).ceil() as usize).max(1);
        let times: Vec<f64> = (1..=steps).map(|k| (k as f64 * TIME_SCAN_STEP).min(gt_max)).collect();
        let values: Vec<f64> = times.par_iter().map(|&t| self.fisher(t).value).collect();
        let mut best = 0;
        for (k, v) in values.iter().enumerate() {
            if *v > values[best] {
                best = k;
            }
        }
        let lo = (times[best] - TIME_SCAN_STEP).max(0.0);
        let hi = (times[best] + TIME_SCAN_STEP).min(gt_max);
        let (gt, fisher) = golden_max(|t| self.fisher(t).value, lo, hi, TIME_TOL);
        let (gt, fisher) = if fisher >= values[best] { (gt, fisher) } else { (times[best], values[best]) };
        Ok(OptimalTime { gt, fisher })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalTime {
    pub gt: f64,
    pub fisher: f64,
}

pub fn jc_excited_probability(beta: f64, spec: &JcProbeSpec) -> Result<f64> {
    Ok(JcEvaluator::new(beta, spec)?.probability_and_slope(spec.gt).0)
}

/// Temperature derivative of the excited-state probability.
pub fn jc_excited_probability_slope(beta: f64, spec: &JcProbeSpec) -> Result<f64> {
    Ok(JcEvaluator::new(beta, spec)?.probability_and_slope(spec.gt).1)
}

pub fn jc_fisher(beta: f64, spec: &JcProbeSpec) -> Result<ProbeFisher> {
    Ok(JcEvaluator::new(beta, spec)?.fisher(spec.gt))
}

pub fn jc_optimal_time(beta: f64, spec: &JcProbeSpec, gt_max: f64) -> Result<OptimalTime> {
    JcEvaluator::new(beta, spec)?.optimal_time(gt_max)
}

/// Coarse-grained Fisher information of the best two-outcome energy
/// measurement made directly on the mode.
pub fn mode_binary_fisher(beta: f64, omega_a: f64) -> Result<f64> {
    let ensemble = ThermalEnsemble::new(bosonic_spectrum(1, omega_a, beta, None)?, beta)?;
    let binning = dp_exact(&ensemble, 2)?;
    Ok(binned_fisher(&ensemble, &binning)?.coarse_fisher)
}

/// Optimized probe performance at one temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeEfficiency {
    pub beta: f64,
    pub detuning: f64,
    pub gt_opt: f64,
    pub probe_fisher: f64,
    pub binary_fisher: f64,
    pub ratio: f64,
    /// Thermal Fisher information of the mode.
    pub thermal_fisher: f64,
}

pub fn probe_efficiency(beta: f64, spec: &JcProbeSpec, gt_max: f64) -> Result<ProbeEfficiency> {
    let opt = jc_optimal_time(beta, spec, gt_max)?;
    let binary = mode_binary_fisher(beta, spec.omega_a)?;
    let x = (-beta * spec.omega_a).exp();
    // variance of a geometric occupation times beta^4
    let thermal = beta.powi(4) * spec.omega_a * spec.omega_a * x / (1.0 - x).powi(2);
    Ok(ProbeEfficiency {
        beta,
        detuning: spec.detuning(),
        gt_opt: opt.gt,
        probe_fisher: opt.fisher,
        binary_fisher: binary,
        ratio: opt.fisher / binary,
        thermal_fisher: thermal,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeBoundEntry {
    pub label: String,
    pub fisher: f64,
}

/// Comparison of probe Fisher values with the optimal `bins`-outcome measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeBoundReport {
    pub bins: usize,
    pub optimal: f64,
    pub entries: Vec<ProbeBoundEntry>,
    /// Largest `fisher - optimal` over the entries.
    pub max_excess: f64,
}

/// Fails with [`Error::BoundViolation`] if any probe beats the optimal binning.
pub fn probe_bound_check(ensemble: &ThermalEnsemble, bins: usize, probes: Vec<ProbeBoundEntry>) -> Result<ProbeBoundReport> {
    let binning = dp_exact(ensemble, bins)?;
    let optimal = binned_fisher(ensemble, &binning)?.coarse_fisher;
    let mut max_excess = f64::NEG_INFINITY;
    for entry in &probes {
        max_excess = max_excess.max(entry.fisher - optimal);
        if entry.fisher > optimal + BOUND_SLACK {
            return Err(Error::BoundViolation {
                probe: entry.fisher,
                optimal,
            });
        }
    }
    Ok(ProbeBoundReport {
        bins,
        optimal,
        entries: probes,
        max_excess,
    })
}

/// Checks the optimized Jaynes-Cummings probe against the mode's optimal
/// two-outcome measurement.
pub fn jc_bound_check(beta: f64, spec: &JcProbeSpec, gt_max: f64) -> Result<ProbeBoundReport> {
    let opt = jc_optimal_time(beta, spec, gt_max)?;
    let ensemble = ThermalEnsemble::new(bosonic_spectrum(1, spec.omega_a, beta, None)?, beta)?;
    probe_bound_check(
        &ensemble,
        2,
        vec![ProbeBoundEntry {
            label: format!("jc gt={:.6}", opt.gt),
            fisher: opt.fisher,
        }],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::n_qubit_spectrum;

    fn reference_probability(beta: f64, gt: f64, delta: f64) -> f64 {
        let x = (-beta).exp();
        (0..500)
            .map(|m| {
                let photons = (m + 1) as f64;
                let lambda2 = delta * delta / 4.0 + photons;
                (1.0 - x) * x.powf(photons) * photons / lambda2 * (lambda2.sqrt() * gt).sin().powi(2)
            })
            .sum()
    }

    #[test]
    fn probability_matches_long_sum() {
        let spec = JcProbeSpec::resonant(1.0, 1.0).with_gt(1.0);
        let p = jc_excited_probability(1.0, &spec).unwrap();
        assert!((p - reference_probability(1.0, 1.0, 0.0)).abs() < 1e-12);
        let detuned = JcProbeSpec { omega_d: 1.6, ..spec };
        let p = jc_excited_probability(1.0, &detuned).unwrap();
        assert!((p - reference_probability(1.0, 1.0, 0.6)).abs() < 1e-12);
        assert_eq!(jc_excited_probability(1.0, &spec.with_gt(0.0)).unwrap(), 0.0);
    }

    #[test]
    fn zero_time_is_degenerate() {
        let f = jc_fisher(0.5, &JcProbeSpec::resonant(1.0, 1.0)).unwrap();
        assert!(f.degenerate && f.value == 0.0);
    }

    #[test]
    fn slope_matches_finite_difference() {
        for &(beta, gt, delta) in &[(0.3, 0.7, 0.0), (1.0, 1.9, 0.5), (2.0, 2.4, 1.2)] {
            let spec = JcProbeSpec {
                omega_d: 1.0 + delta,
                ..JcProbeSpec::resonant(1.0, 1.0).with_gt(gt)
            };
            let t: f64 = 1.0 / beta;
            let h = t * 1e-5;
            let p = |t: f64| jc_excited_probability(1.0 / t, &spec).unwrap();
            let fd = (p(t + h) - p(t - h)) / (2.0 * h);
            let analytic = jc_excited_probability_slope(beta, &spec).unwrap();
            assert!((fd / analytic - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn truncation_is_minimal() {
        let m = jc_truncation(0.1, 1.0).unwrap();
        let x = (-0.1f64).exp();
        assert!(x.powf(m as f64 + 2.0) < TRUNCATION_TAIL);
        assert!(x.powf(m as f64 + 1.0) >= TRUNCATION_TAIL);
        let spec = JcProbeSpec {
            n_max: Some(10),
            ..JcProbeSpec::resonant(1.0, 1.0)
        };
        assert!(matches!(
            jc_excited_probability(0.1, &spec),
            Err(Error::TruncationInsufficient { .. })
        ));
    }

    #[test]
    fn cold_probe_peaks_at_quarter_rabi_period() {
        let opt = jc_optimal_time(10.0, &JcProbeSpec::resonant(1.0, 1.0), DEFAULT_GT_MAX).unwrap();
        assert!((opt.gt - FRAC_PI_2).abs() < 1e-2);
    }

    #[test]
    fn scan_agrees_with_multistart_refinement() {
        let eval = JcEvaluator::new(0.5, &JcProbeSpec::resonant(1.0, 1.0)).unwrap();
        let opt = eval.optimal_time(DEFAULT_GT_MAX).unwrap();
        let best = (0..16)
            .map(|k| {
                let width = DEFAULT_GT_MAX / 16.0;
                golden_max(|t| eval.fisher(t).value, k as f64 * width, (k + 1) as f64 * width, TIME_TOL)
            })
            .fold((0.0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a });
        assert!((best.1 - opt.fisher).abs() <= 1e-12 * opt.fisher);
        assert!((best.0 - opt.gt).abs() < 1e-6);
    }

    #[test]
    fn ideal_probe_reproduces_binary_projection() {
        let beta = 0.6;
        let ens = ThermalEnsemble::new(n_qubit_spectrum(40).unwrap(), beta).unwrap();
        let binning = dp_exact(&ens, 2).unwrap();
        let threshold = binning.cuts()[0];
        let optimal = binned_fisher(&ens, &binning).unwrap().coarse_fisher;
        let full = IdealProbeSpec::full_flip(threshold, 0.3);
        let f = ideal_probe_fisher(&ens, &full).unwrap().value;
        assert!((f - optimal).abs() < 1e-9 * optimal);
        let half = IdealProbeSpec { time: full.time / 2.0, ..full };
        let p_full = ideal_probe_up_probability(&ens, &full).unwrap();
        assert!((ideal_probe_up_probability(&ens, &half).unwrap() - p_full / 2.0).abs() < 1e-15);
        assert!(ideal_probe_fisher(&ens, &half).unwrap().value < f);
        let zero = IdealProbeSpec { time: 0.0, ..full };
        assert_eq!(ideal_probe_up_probability(&ens, &zero).unwrap(), 0.0);
        let report = probe_bound_check(
            &ens,
            2,
            vec![ProbeBoundEntry {
                label: "ideal".into(),
                fisher: f,
            }],
        )
        .unwrap();
        assert!(report.max_excess.abs() < 1e-9);
    }

    #[test]
    fn bound_violation_is_reported() {
        let ens = ThermalEnsemble::new(n_qubit_spectrum(4).unwrap(), 1.0).unwrap();
        let fake = vec![ProbeBoundEntry {
            label: "too good".into(),
            fisher: 10.0,
        }];
        assert!(matches!(probe_bound_check(&ens, 2, fake), Err(Error::BoundViolation { .. })));
    }

    #[test]
    fn jc_probe_respects_bound() {
        for beta in [0.1, 0.5, 1.0, 2.0] {
            jc_bound_check(beta, &JcProbeSpec::resonant(1.0, 1.0), DEFAULT_GT_MAX).unwrap();
        }
    }

    #[test]
    fn config_defaults_window() {
        let cfg: ProbeConfig = serde_json::from_str(r#"{"omega_d":1,"omega_a":1,"g":0.1}"#).unwrap();
        assert_eq!(cfg.gt_max, DEFAULT_GT_MAX);
        assert_eq!(cfg.spec().detuning(), 0.0);
    }
}
