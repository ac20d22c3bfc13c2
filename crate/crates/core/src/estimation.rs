//! Monte Carlo check of the Cramer-Rao bound for binned energy measurements.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binning::Binning;
use crate::error::{Error, Result};
use crate::fisher::binned_fisher;
use crate::models::{build_spectrum, Model};
use crate::special::golden_max;
use crate::spectra::{Spectrum, ThermalEnsemble};

/// Generator used for every draw; each trial runs on its own stream.
pub const RNG_ID: &str = "chacha20/rand_chacha-0.9/stream=trial";
/// The estimate is searched within `[T*/BRACKET, BRACKET T*]`.
pub const BRACKET: f64 = 10.0;
/// Relative tolerance of the likelihood maximization.
pub const MLE_TOL: f64 = 1e-8;
pub const MIN_REPORT_TRIALS: usize = 30;
pub const BOOTSTRAP_RESAMPLES: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub model: Model,
    /// True temperature.
    pub t_star: f64,
    pub binning: Binning,
    /// Measurements per trial.
    pub n: u64,
    pub trials: usize,
    pub seed: u64,
}

impl ExperimentSpec {
    fn validate(&self) -> Result<()> {
        if !(self.t_star > 0.0 && self.t_star.is_finite()) {
            return Err(Error::InvalidParameter(format!("true temperature must be positive, got {}", self.t_star)));
        }
        if self.n == 0 || self.trials == 0 {
            return Err(Error::InvalidParameter("need at least one sample and one trial".into()));
        }
        Ok(())
    }

    pub fn likelihood(&self) -> Result<BinnedFamily> {
        self.validate()?;
        let spectrum = build_spectrum(&self.model, 1.0 / self.t_star)?;
        Ok(BinnedFamily::new(Arc::new(spectrum), self.binning.clone()))
    }
}

/// Outcome distribution of a fixed binning as a function of temperature.
#[derive(Debug, Clone)]
pub struct BinnedFamily {
    spectrum: Arc<Spectrum>,
    binning: Binning,
}

impl BinnedFamily {
    pub fn new(spectrum: Arc<Spectrum>, binning: Binning) -> Self {
        Self { spectrum, binning }
    }

    pub fn ensemble(&self, temperature: f64) -> Result<ThermalEnsemble> {
        ThermalEnsemble::from_shared(self.spectrum.clone(), 1.0 / temperature)
    }

    pub fn probabilities(&self, temperature: f64) -> Result<Vec<f64>> {
        self.binning.probabilities(&self.ensemble(temperature)?)
    }

    pub fn coarse_fisher(&self, temperature: f64) -> Result<f64> {
        Ok(binned_fisher(&self.ensemble(temperature)?, &self.binning)?.coarse_fisher)
    }

    pub fn log_likelihood(&self, counts: &[u64], temperature: f64) -> Result<f64> {
        let p = self.probabilities(temperature)?;
        let mut total = 0.0;
        for (&k, &pa) in counts.iter().zip(&p) {
            // zero counts contribute nothing
            if k > 0 {
                total += k as f64 * pa.ln();
            }
        }
        Ok(total)
    }
}

/// Multinomial draw of `n` outcomes by sequential conditional binomials.
fn multinomial<R: Rng>(rng: &mut R, n: u64, p: &[f64]) -> Result<Vec<u64>> {
    let mut counts = vec![0u64; p.len()];
    let mut left = n;
    let mut mass_left = 1.0;
    for (a, &pa) in p.iter().enumerate() {
        if left == 0 {
            break;
        }
        if a + 1 == p.len() {
            counts[a] = left;
            break;
        }
        let share = if mass_left > 0.0 { (pa / mass_left).clamp(0.0, 1.0) } else { 0.0 };
        let draw = Binomial::new(left, share)
            .map_err(|e| Error::InvalidParameter(format!("bad outcome probability: {e}")))?
            .sample(rng);
        counts[a] = draw;
        left -= draw;
        mass_left -= pa;
    }
    Ok(counts)
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Outcome counts for every trial; trial `k` uses stream `k` of the seeded generator.
pub fn sample_outcomes(spec: &ExperimentSpec) -> Result<Vec<Vec<u64>>> {
    let family = spec.likelihood()?;
    let p = family.probabilities(spec.t_star)?;
    sample_from(&p, spec.n, spec.trials, spec.seed)
}

pub fn sample_from(p: &[f64], n: u64, trials: usize, seed: u64) -> Result<Vec<Vec<u64>>> {
    (0..trials)
        .into_par_iter()
        .map(|k| multinomial(&mut trial_rng(seed, k), n, p))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MleEstimate {
    pub temperature: f64,
    /// The maximum sits at an end of the search bracket.
    pub at_boundary: bool,
}

/// Maximum-likelihood temperature, searched by golden section in `ln T`
/// over `[reference/10, 10 reference]`.
pub fn mle_temperature(counts: &[u64], family: &BinnedFamily, reference: f64) -> Result<MleEstimate> {
    if counts.iter().sum::<u64>() == 0 {
        return Err(Error::InvalidParameter("no counts to estimate from".into()));
    }
    if counts.len() != family.binning.num_bins() {
        return Err(Error::InvalidParameter(format!(
            "{} counts for {} outcomes",
            counts.len(),
            family.binning.num_bins()
        )));
    }
    if family.binning.num_bins() < 2 {
        return Err(Error::NonIdentifiable("a single outcome carries no temperature dependence".into()));
    }
    let lo = (reference / BRACKET).ln();
    let hi = (reference * BRACKET).ln();
    let informative = [lo, 0.5 * (lo + hi), hi]
        .iter()
        .map(|&lt| family.coarse_fisher(lt.exp()))
        .collect::<Result<Vec<_>>>()?;
    if informative.iter().all(|&c| c <= 0.0) {
        return Err(Error::NonIdentifiable("likelihood is flat across the search bracket".into()));
    }
    let (lt, _) = golden_max(
        |lt| family.log_likelihood(counts, lt.exp()).unwrap_or(f64::NEG_INFINITY),
        lo,
        hi,
        MLE_TOL,
    );
    let edge = 2.0 * MLE_TOL;
    Ok(MleEstimate {
        temperature: lt.exp(),
        at_boundary: lt - lo < edge || hi - lt < edge,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CramerRaoReport {
    #[serde(rename = "T_star")]
    pub t_star: f64,
    pub n: u64,
    pub trials: usize,
    pub mean_estimate: f64,
    pub bias: f64,
    pub empirical_var: f64,
    pub cr_bound: f64,
    /// `cr_bound / empirical_var`.
    pub efficiency: f64,
    /// 95% bootstrap interval of the empirical variance.
    pub var_ci: (f64, f64),
    /// Half-width of `var_ci` relative to the empirical variance.
    pub var_ci_rel: f64,
    pub boundary_hits: usize,
    pub coarse_fisher: f64,
    pub seed: u64,
    pub rng: String,
}

impl CramerRaoReport {
    /// `empirical_var >= cr_bound (1 - 3 ci)`.
    pub fn respects_bound(&self) -> bool {
        self.empirical_var >= self.cr_bound * (1.0 - 3.0 * self.var_ci_rel)
    }
}

fn sample_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Runs all trials and compares the spread of the estimates with `1/(nC)`.
pub fn cramer_rao_report(spec: &ExperimentSpec) -> Result<CramerRaoReport> {
    if spec.trials < MIN_REPORT_TRIALS {
        return Err(Error::InvalidParameter(format!(
            "need at least {MIN_REPORT_TRIALS} trials, got {}",
            spec.trials
        )));
    }
    let family = spec.likelihood()?;
    let coarse = family.coarse_fisher(spec.t_star)?;
    let p = family.probabilities(spec.t_star)?;
    let estimates: Vec<MleEstimate> = (0..spec.trials)
        .into_par_iter()
        .map(|k| {
            let counts = multinomial(&mut trial_rng(spec.seed, k), spec.n, &p)?;
            mle_temperature(&counts, &family, spec.t_star)
        })
        .collect::<Result<_>>()?;
    let values: Vec<f64> = estimates.iter().map(|e| e.temperature).collect();
    let (mean, var) = sample_variance(&values);
    let mut boot_rng = trial_rng(spec.seed, usize::MAX);
    let mut boot: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            let resample: Vec<f64> = (0..values.len())
                .map(|_| values[boot_rng.random_range(0..values.len())])
                .collect();
            sample_variance(&resample).1
        })
        .collect();
    boot.sort_by(f64::total_cmp);
    let at = |q: f64| boot[((q * (boot.len() - 1) as f64).round() as usize).min(boot.len() - 1)];
    let ci = (at(0.025), at(0.975));
    let bound = 1.0 / (spec.n as f64 * coarse);
    Ok(CramerRaoReport {
        t_star: spec.t_star,
        n: spec.n,
        trials: spec.trials,
        mean_estimate: mean,
        bias: mean - spec.t_star,
        empirical_var: var,
        cr_bound: bound,
        efficiency: bound / var,
        var_ci: ci,
        var_ci_rel: (ci.1 - ci.0) / (2.0 * var),
        boundary_hits: estimates.iter().filter(|e| e.at_boundary).count(),
        coarse_fisher: coarse,
        seed: spec.seed,
        rng: RNG_ID.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binning::{solve, SolverConfig};
    use crate::models::build_ensemble;

    fn gaussian_spec(n: u64, trials: usize, seed: u64) -> ExperimentSpec {
        let model = Model::GaussianDos { mean: 0.0, sigma: 1.0 };
        let ens = build_ensemble(&model, 1.0).unwrap();
        ExperimentSpec {
            binning: solve(&ens, &SolverConfig::with_bins(2)).unwrap().binning,
            model,
            t_star: 1.0,
            n,
            trials,
            seed,
        }
    }

    fn gaussian_mean_spec(n: u64, trials: usize, seed: u64) -> ExperimentSpec {
        let model = Model::GaussianDos { mean: 0.0, sigma: 1.0 };
        let ens = build_ensemble(&model, 1.0).unwrap();
        ExperimentSpec {
            binning: Binning::new(vec![ens.mean_energy()]).unwrap(),
            model,
            t_star: 1.0,
            n,
            trials,
            seed,
        }
    }

    #[test]
    fn balanced_binomial_concentrates() {
        let counts = sample_from(&[0.5, 0.5], 1_000_000, 1, 3).unwrap();
        let frac = counts[0][0] as f64 / 1e6;
        assert!((frac - 0.5).abs() < 0.002);
        assert_eq!(counts[0].iter().sum::<u64>(), 1_000_000);
    }

    #[test]
    fn sampling_is_deterministic() {
        let spec = gaussian_mean_spec(1000, 5, 42);
        assert_eq!(sample_outcomes(&spec).unwrap(), sample_outcomes(&spec).unwrap());
        let other = ExperimentSpec { seed: 43, ..spec.clone() };
        assert_ne!(sample_outcomes(&spec).unwrap(), sample_outcomes(&other).unwrap());
    }

    #[test]
    fn mean_boundary_balances_outcomes() {
        let spec = gaussian_mean_spec(10, 1, 0);
        let p = spec.likelihood().unwrap().probabilities(1.0).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn expected_counts_recover_temperature() {
        let spec = gaussian_mean_spec(10, 1, 0);
        let family = spec.likelihood().unwrap();
        let t0 = 1.3;
        let p = family.probabilities(t0).unwrap();
        // scaled expected counts keep the likelihood maximum at t0
        let counts: Vec<u64> = p.iter().map(|pa| (pa * 1e12).round() as u64).collect();
        let est = mle_temperature(&counts, &family, 1.0).unwrap();
        assert!((est.temperature - t0).abs() < 1e-6);
        assert!(!est.at_boundary);
    }

    #[test]
    fn single_outcome_is_not_identifiable() {
        let spec = gaussian_mean_spec(10, 1, 0);
        let family = BinnedFamily::new(
            Arc::new(build_spectrum(&spec.model, 1.0).unwrap()),
            Binning::trivial(),
        );
        assert!(matches!(mle_temperature(&[10], &family, 1.0), Err(Error::NonIdentifiable(_))));
    }

    #[test]
    fn report_is_reproducible_and_respects_bound() {
        let spec = gaussian_spec(10_000, 60, 11);
        let a = cramer_rao_report(&spec).unwrap();
        let b = cramer_rao_report(&spec).unwrap();
        assert_eq!(a, b);
        assert!(a.respects_bound());
        assert_eq!(a.rng, RNG_ID);
        let v = serde_json::to_value(&a).unwrap();
        for key in ["T_star", "n", "trials", "empirical_var", "cr_bound", "efficiency", "seed", "rng"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn tail_boundary_still_respects_bound() {
        let mut spec = gaussian_spec(10_000, 40, 5);
        spec.binning = Binning::new(vec![1.0]).unwrap();
        let r = cramer_rao_report(&spec).unwrap();
        let good = cramer_rao_report(&gaussian_spec(10_000, 40, 5)).unwrap();
        assert!(r.cr_bound > good.cr_bound);
        assert!(r.respects_bound());
    }

    #[test]
    fn too_few_trials_rejected() {
        assert!(cramer_rao_report(&gaussian_spec(100, 10, 0)).is_err());
    }

    #[test]
    fn likelihood_is_unimodal_on_scan() {
        let spec = gaussian_mean_spec(10, 1, 0);
        let family = spec.likelihood().unwrap();
        let counts = sample_from(&family.probabilities(1.0).unwrap(), 100_000, 1, 9).unwrap().remove(0);
        let ll: Vec<f64> = (0..400)
            .map(|k| family.log_likelihood(&counts, 0.1 * 100f64.powf(k as f64 / 399.0)).unwrap())
            .collect();
        let peak = ll.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert!(ll[..peak].windows(2).all(|w| w[1] >= w[0]));
        assert!(ll[peak..].windows(2).all(|w| w[1] <= w[0]));
    }
}
