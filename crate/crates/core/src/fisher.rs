//! Thermal and coarse-grained Fisher information.

use serde::{Deserialize, Serialize};

use crate::binning::Binning;
use crate::error::{Error, Result};
use crate::spectra::{BinMoments, ThermalEnsemble};

/// Outcomes with probability below this are dropped from Fisher sums.
pub const NEGLIGIBLE_PROBABILITY: f64 = 1e-15;
/// Largest tolerated deviation of `sum_a w_{a,i}` from one.
pub const COMPLETENESS_TOL: f64 = 1e-9;

/// Fisher information of a thermal state and of a coarse-grained measurement on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherReport {
    pub thermal_fisher: f64,
    pub coarse_fisher: f64,
    pub distortion: f64,
    pub ratio: f64,
    /// Indices of bins whose probability fell below [`NEGLIGIBLE_PROBABILITY`].
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub empty_bins: Vec<usize>,
}

/// `beta^4 var(H)`.
pub fn thermal_fisher(ensemble: &ThermalEnsemble) -> f64 {
    ensemble.beta().powi(4) * ensemble.variance()
}

/// Build a report from per-bin moments about the ensemble mean.
pub fn report_from_moments(ensemble: &ThermalEnsemble, bins: &[BinMoments], within: &[f64]) -> FisherReport {
    let b4 = ensemble.beta().powi(4);
    let thermal = thermal_fisher(ensemble);
    let mut coarse = 0.0;
    let mut distortion = 0.0;
    let mut empty = Vec::new();
    for (k, (m, w)) in bins.iter().zip(within).enumerate() {
        if m.mass < NEGLIGIBLE_PROBABILITY {
            empty.push(k);
            distortion += m.second;
        } else {
            coarse += m.first * m.first / m.mass;
            distortion += w;
        }
    }
    let coarse = b4 * coarse;
    FisherReport {
        thermal_fisher: thermal,
        coarse_fisher: coarse,
        distortion: b4 * distortion,
        ratio: if thermal > 0.0 { (coarse / thermal).min(1.0) } else { 0.0 },
        empty_bins: empty,
    }
}

/// Coarse-grained Fisher information of a consecutive binning, with the
/// distortion computed from the energy spread inside each bin.
pub fn binned_fisher(ensemble: &ThermalEnsemble, binning: &Binning) -> Result<FisherReport> {
    let bins = binning.moments(ensemble)?;
    let within = within_bin_variances(ensemble, binning, &bins);
    Ok(report_from_moments(ensemble, &bins, &within))
}

/// `sum q (E - eps)^2` over each bin, taken level by level when the spectrum is discrete.
fn within_bin_variances(ensemble: &ThermalEnsemble, binning: &Binning, bins: &[BinMoments]) -> Vec<f64> {
    let mu = ensemble.mean_energy();
    match (ensemble.discrete(), ensemble.level_probabilities()) {
        (Some(s), Some(q)) => {
            let bounds = binning.boundaries();
            bins.iter()
                .enumerate()
                .map(|(k, m)| {
                    if m.mass <= 0.0 {
                        return 0.0;
                    }
                    let eps = mu + m.first / m.mass;
                    let i = s.energies().partition_point(|&e| e < bounds[k]);
                    let j = s.energies().partition_point(|&e| e < bounds[k + 1]);
                    (i..j).map(|l| q[l] * (s.energies()[l] - eps).powi(2)).sum()
                })
                .collect()
        }
        _ => bins.iter().map(BinMoments::within_variance).collect(),
    }
}

/// `dp_a/dT = beta^2 p_a (eps_a - <H>)` for each bin.
pub fn bin_probability_derivatives(ensemble: &ThermalEnsemble, binning: &Binning) -> Result<Vec<f64>> {
    let b2 = ensemble.beta().powi(2);
    Ok(binning.moments(ensemble)?.iter().map(|m| b2 * m.first).collect())
}

/// Diagonal POVM: `weights[a][i]` is the weight of outcome `a` on level `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalPovm {
    weights: Vec<Vec<f64>>,
}

impl DiagonalPovm {
    pub fn new(weights: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = weights.first() else {
            return Err(Error::InvalidParameter("POVM needs at least one outcome".into()));
        };
        let levels = first.len();
        if weights.iter().any(|w| w.len() != levels) {
            return Err(Error::InvalidParameter("all POVM outcomes must cover the same levels".into()));
        }
        if weights.iter().flatten().any(|w| !(-COMPLETENESS_TOL..=1.0 + COMPLETENESS_TOL).contains(w)) {
            return Err(Error::InvalidParameter("POVM weights must lie in [0, 1]".into()));
        }
        for level in 0..levels {
            let total: f64 = weights.iter().map(|w| w[level]).sum();
            if (total - 1.0).abs() > COMPLETENESS_TOL {
                return Err(Error::IncompletePovm {
                    level,
                    deviation: total - 1.0,
                });
            }
        }
        Ok(Self { weights })
    }

    /// The trivial single-outcome measurement.
    pub fn identity(levels: usize) -> Self {
        Self {
            weights: vec![vec![1.0; levels]],
        }
    }

    /// One outcome per level.
    pub fn projective(levels: usize) -> Self {
        Self {
            weights: (0..levels)
                .map(|a| (0..levels).map(|i| if i == a { 1.0 } else { 0.0 }).collect())
                .collect(),
        }
    }

    /// Deterministic assignment of each level to an outcome label.
    pub fn from_assignment(assignment: &[usize], outcomes: usize) -> Self {
        Self {
            weights: (0..outcomes)
                .map(|a| assignment.iter().map(|&l| if l == a { 1.0 } else { 0.0 }).collect())
                .collect(),
        }
    }

    /// Pointwise `lambda * self + (1 - lambda) * other`.
    pub fn mix(&self, other: &Self, lambda: f64) -> Result<Self> {
        if self.weights.len() != other.weights.len() || self.levels() != other.levels() {
            return Err(Error::InvalidParameter("mixed POVMs must have the same shape".into()));
        }
        Ok(Self {
            weights: self
                .weights
                .iter()
                .zip(&other.weights)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| lambda * x + (1.0 - lambda) * y).collect())
                .collect(),
        })
    }

    pub fn outcomes(&self) -> usize {
        self.weights.len()
    }

    pub fn levels(&self) -> usize {
        self.weights[0].len()
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }
}

/// Classical Fisher information of a diagonal POVM's outcome distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PovmFisher {
    pub value: f64,
    /// Outcomes dropped because their probability was negligible.
    pub dropped: Vec<usize>,
}

pub fn povm_fisher(ensemble: &ThermalEnsemble, povm: &DiagonalPovm) -> Result<PovmFisher> {
    let (Some(s), Some(q)) = (ensemble.discrete(), ensemble.level_probabilities()) else {
        return Err(Error::InvalidParameter("POVM Fisher information needs a discrete spectrum".into()));
    };
    if povm.levels() != s.len() {
        return Err(Error::InvalidParameter(format!(
            "POVM covers {} levels but the spectrum has {}",
            povm.levels(),
            s.len()
        )));
    }
    let mu = ensemble.mean_energy();
    let mut total = 0.0;
    let mut dropped = Vec::new();
    for (a, w) in povm.weights.iter().enumerate() {
        let mut p = 0.0;
        let mut slope = 0.0;
        for ((wi, qi), e) in w.iter().zip(q).zip(s.energies()) {
            p += wi * qi;
            slope += wi * qi * (e - mu);
        }
        if p < NEGLIGIBLE_PROBABILITY {
            dropped.push(a);
        } else {
            total += slope * slope / p;
        }
    }
    Ok(PovmFisher {
        value: ensemble.beta().powi(4) * total,
        dropped,
    })
}

/// Constant `Xi` with `Xi F <= C` for distributions with light tails.
pub fn proportionality_bound(lambda0: f64, lambda: f64, tail_fraction: f64) -> Result<f64> {
    if !(lambda0 > 0.0 && lambda0 < 0.5) {
        return Err(Error::ParameterOutOfRange(format!("lambda0 must lie in (0, 1/2), got {lambda0}")));
    }
    if !(lambda > 1.0 && lambda.is_finite()) {
        return Err(Error::ParameterOutOfRange(format!("lambda must exceed 1, got {lambda}")));
    }
    if !(0.0..0.5).contains(&tail_fraction) {
        return Err(Error::ParameterOutOfRange(format!(
            "tail fraction must lie in [0, 1/2), got {tail_fraction}"
        )));
    }
    let l0sq = lambda0 * lambda0;
    let ratio = (1.0 - tail_fraction - l0sq) / (lambda * lambda - l0sq);
    Ok(4.0 * l0sq * ratio * ratio)
}

/// `∫ (E - <H>)^2 q(E)` over `|E - <H>| > lambda * sqrt(var H)`.
pub fn tail_second_moment(ensemble: &ThermalEnsemble, lambda: f64) -> Result<f64> {
    if !(lambda > 1.0) {
        return Err(Error::ParameterOutOfRange(format!("lambda must exceed 1, got {lambda}")));
    }
    let mu = ensemble.mean_energy();
    let reach = lambda * ensemble.variance().sqrt();
    if let (Some(s), Some(q)) = (ensemble.discrete(), ensemble.level_probabilities()) {
        return Ok(s
            .energies()
            .iter()
            .zip(q)
            .filter(|(e, _)| (*e - mu).abs() > reach)
            .map(|(e, q)| q * (e - mu).powi(2))
            .sum());
    }
    if reach.is_infinite() {
        return Ok(0.0);
    }
    let below = ensemble.interval_moments(f64::NEG_INFINITY, mu - reach)?;
    let above = ensemble.interval_moments(mu + reach, f64::INFINITY)?;
    Ok(below.second + above.second)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::{ContinuousDos, DiscreteSpectrum};

    fn ladder(levels: usize, beta: f64) -> ThermalEnsemble {
        let s = DiscreteSpectrum::new((0..levels).map(|i| (i as f64, 1u64.into())).collect()).unwrap();
        ThermalEnsemble::new(s, beta).unwrap()
    }

    #[test]
    fn identity_povm_has_no_information() {
        let ens = ladder(5, 1.0);
        assert!(povm_fisher(&ens, &DiagonalPovm::identity(5)).unwrap().value < 1e-25);
    }

    #[test]
    fn projective_povm_recovers_thermal() {
        let ens = ladder(6, 0.7);
        let f = povm_fisher(&ens, &DiagonalPovm::projective(6)).unwrap().value;
        assert!((f / thermal_fisher(&ens) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn incomplete_povm_rejected() {
        let err = DiagonalPovm::new(vec![vec![0.5, 1.0], vec![0.4, 0.0]]).unwrap_err();
        assert!(matches!(err, Error::IncompletePovm { level: 0, .. }));
    }

    #[test]
    fn full_resolution_binning() {
        let ens = ladder(4, 1.0);
        let b = Binning::new(vec![0.5, 1.5, 2.5]).unwrap();
        let r = binned_fisher(&ens, &b).unwrap();
        assert!((r.coarse_fisher - r.thermal_fisher).abs() < 1e-14);
        assert!(r.distortion.abs() < 1e-15);
    }

    #[test]
    fn gaussian_median_split() {
        let ens = ThermalEnsemble::new(ContinuousDos::gaussian(0.0, 1.5).unwrap(), 1.0).unwrap();
        let b = Binning::new(vec![ens.mean_energy()]).unwrap();
        let r = binned_fisher(&ens, &b).unwrap();
        assert!((r.ratio - 2.0 / std::f64::consts::PI).abs() < 1e-14);
        assert!(((r.coarse_fisher + r.distortion) / r.thermal_fisher - 1.0).abs() < 1e-12);
    }

    #[test]
    fn far_tail_bin_flagged() {
        let ens = ThermalEnsemble::new(ContinuousDos::gaussian(0.0, 1.0).unwrap(), 0.0).unwrap();
        let b = Binning::new(vec![40.0]).unwrap();
        let r = binned_fisher(&ens, &b).unwrap();
        assert_eq!(r.empty_bins, vec![1]);
        assert_eq!(r.coarse_fisher, 0.0);
    }

    #[test]
    fn bound_closed_form() {
        let xi = proportionality_bound(0.4, 2.0, 0.1).unwrap();
        let expected = 4.0 * 0.16 * ((1.0 - 0.1 - 0.16) / (4.0 - 0.16_f64)).powi(2);
        assert!((xi - expected).abs() < 1e-16);
        assert!((xi - 0.0238).abs() < 1e-4);
        assert!(proportionality_bound(1e-9, 2.0, 0.1).unwrap() < 1e-17);
        assert!(proportionality_bound(0.5, 2.0, 0.1).is_err());
        assert!(proportionality_bound(0.4, 1.0, 0.1).is_err());
    }

    #[test]
    fn tail_vanishes_far_out() {
        let ens = ladder(5, 1.0);
        assert_eq!(tail_second_moment(&ens, 1e6).unwrap(), 0.0);
        let g = ThermalEnsemble::new(ContinuousDos::gaussian(0.0, 1.0).unwrap(), 0.5).unwrap();
        assert!(tail_second_moment(&g, 40.0).unwrap() < 1e-300);
    }
}
