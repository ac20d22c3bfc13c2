use proptest::prelude::*;

use thermobin_core::binning::{brute_force, dp_exact, lloyd_max, solve, Binning, SolverConfig, SolverMode};
use thermobin_core::estimation::{cramer_rao_report, sample_outcomes, ExperimentSpec};
use thermobin_core::fisher::{binned_fisher, povm_fisher, DiagonalPovm};
use thermobin_core::models::{
    build_ensemble, free_fermion_moments, nqubit_large_n_ratio, qubit_excitation, tight_binding_modes, Model,
    TIGHT_BINDING_RESOLUTION,
};
use thermobin_core::probe::{jc_excited_probability, jc_excited_probability_slope, JcEvaluator, JcProbeSpec};
use thermobin_core::spectra::{Degeneracy, DiscreteSpectrum, ThermalEnsemble};

/// Increasing energies with positive weights.
fn spectrum_strategy(min_levels: usize, max_levels: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.05f64..2.0, 0.05f64..5.0), min_levels..=max_levels).prop_map(|raw| {
        let mut e = -1.0;
        raw.into_iter()
            .map(|(gap, w)| {
                e += gap;
                (e, w)
            })
            .collect()
    })
}

fn ensemble(levels: &[(f64, f64)], beta: f64) -> ThermalEnsemble {
    ThermalEnsemble::new(DiscreteSpectrum::from_weights(levels.iter().copied()).unwrap(), beta).unwrap()
}

fn povm_strategy(outcomes: usize, levels: usize) -> impl Strategy<Value = DiagonalPovm> {
    prop::collection::vec(prop::collection::vec(0.01f64..1.0, levels), outcomes).prop_map(move |raw| {
        let weights = (0..outcomes)
            .map(|a| (0..levels).map(|i| raw[a][i] / raw.iter().map(|r| r[i]).sum::<f64>()).collect())
            .collect();
        DiagonalPovm::new(weights).unwrap()
    })
}

fn model_strategy() -> impl Strategy<Value = (Model, f64)> {
    prop_oneof![
        (1usize..200, 0.05f64..3.0).prop_map(|(n, b)| (Model::NQubits { n }, b)),
        (0.1f64..5.0).prop_map(|b| (Model::LinearDos {}, b)),
        (-3.0f64..3.0, 0.2f64..4.0, 0.0f64..3.0).prop_map(|(mean, sigma, b)| (Model::GaussianDos { mean, sigma }, b)),
        (4usize..16, -1.0f64..1.0, 0.2f64..1.5, 0.1f64..2.0).prop_map(|(n, eps_onsite, t_hop, b)| {
            (
                Model::TightBinding {
                    n,
                    eps_onsite,
                    t_hop,
                    grid_resolution: 4096,
                },
                b,
            )
        }),
        (1usize..6, 0.5f64..2.0, 0.3f64..3.0)
            .prop_map(|(m, omega_a, b)| (Model::BosonicModes { m, omega_a, n_max: None }, b)),
        (3usize..1000, 0.0f64..2.0, 0.1f64..2.0).prop_map(|(n, eps, t_peak)| (Model::FourPeak { n, eps, t_peak }, 1.0)),
    ]
}

fn random_cuts(ens: &ThermalEnsemble, fractions: &[f64]) -> Binning {
    let (lo, hi) = ens.effective_support();
    let mut cuts: Vec<f64> = fractions.iter().map(|f| lo + f * (hi - lo)).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    Binning::new(cuts).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn discrete_probabilities_normalize(levels in spectrum_strategy(2, 40), beta in 0.0f64..20.0) {
        let ens = ensemble(&levels, beta);
        let total: f64 = ens.level_probabilities().unwrap().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn variance_is_mean_energy_slope(levels in spectrum_strategy(2, 30), beta in 0.1f64..3.0) {
        let ens = ensemble(&levels, beta);
        let h = beta * 1e-5;
        let fd = -(ens.at_beta(beta + h).unwrap().mean_energy() - ens.at_beta(beta - h).unwrap().mean_energy()) / (2.0 * h);
        prop_assert!((fd / ens.variance() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn splitting_a_level_changes_nothing(levels in spectrum_strategy(2, 20), pick in 0usize..20, share in 0.1f64..0.9, beta in 0.1f64..3.0) {
        let merged = ensemble(&levels, beta);
        let k = pick % levels.len();
        let mut split: Vec<(f64, Degeneracy)> = levels.iter().map(|&(e, w)| (e, Degeneracy::Weight(w))).collect();
        let (e, w) = levels[k];
        split[k].1 = Degeneracy::Weight(w * share);
        split.push((e, Degeneracy::Weight(w * (1.0 - share))));
        let split = ThermalEnsemble::new(DiscreteSpectrum::new(split).unwrap(), beta).unwrap();
        let a = merged.energy_moments(4).unwrap();
        let b = split.energy_moments(4).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn fisher_splits_on_every_model((model, beta) in model_strategy(), fractions in prop::collection::vec(0.0f64..1.0, 1..6)) {
        let ens = build_ensemble(&model, beta).unwrap();
        let r = binned_fisher(&ens, &random_cuts(&ens, &fractions)).unwrap();
        prop_assert!(((r.coarse_fisher + r.distortion) / r.thermal_fisher - 1.0).abs() < 1e-9);
    }

    #[test]
    fn coarse_fisher_matches_outcome_finite_differences(levels in spectrum_strategy(3, 20), beta in 0.2f64..2.0, fractions in prop::collection::vec(0.0f64..1.0, 1..4)) {
        let ens = ensemble(&levels, beta);
        let binning = random_cuts(&ens, &fractions);
        let t = 1.0 / beta;
        let h = t * 1e-3;
        let p = |t: f64| binning.probabilities(&ens.at_beta(1.0 / t).unwrap()).unwrap();
        let (up2, up, mid, down, down2) = (p(t + 2.0 * h), p(t + h), p(t), p(t - h), p(t - 2.0 * h));
        let fd: f64 = (0..mid.len())
            .filter(|&a| mid[a] > 0.0)
            .map(|a| ((8.0 * (up[a] - down[a]) - (up2[a] - down2[a])) / (12.0 * h)).powi(2) / mid[a])
            .sum();
        let c = binned_fisher(&ens, &binning).unwrap().coarse_fisher;
        prop_assert!((fd - c).abs() <= 1e-5 * c.max(1e-12), "fd {} vs C {}", fd, c);
    }

    #[test]
    fn optimal_information_grows_with_bins(levels in spectrum_strategy(3, 30), beta in 0.1f64..3.0) {
        let ens = ensemble(&levels, beta);
        let mut prev = 0.0;
        for d in 1..=levels.len().min(8) {
            let c = binned_fisher(&ens, &dp_exact(&ens, d).unwrap()).unwrap().coarse_fisher;
            prop_assert!(c >= prev - 1e-12);
            prev = c;
        }
    }

    #[test]
    fn moving_a_cut_within_a_gap_is_invisible(levels in spectrum_strategy(3, 20), beta in 0.1f64..3.0, gap in 0usize..19, t1 in 0.01f64..0.99, t2 in 0.01f64..0.99) {
        let ens = ensemble(&levels, beta);
        let g = gap % (levels.len() - 1);
        let (a, b) = (levels[g].0, levels[g + 1].0);
        let first = Binning::new(vec![a + t1 * (b - a)]).unwrap();
        let second = Binning::new(vec![a + t2 * (b - a)]).unwrap();
        prop_assert_eq!(first.probabilities(&ens).unwrap(), second.probabilities(&ens).unwrap());
        prop_assert_eq!(first.bin_energies(&ens).unwrap(), second.bin_energies(&ens).unwrap());
        prop_assert_eq!(
            binned_fisher(&ens, &first).unwrap().coarse_fisher,
            binned_fisher(&ens, &second).unwrap().coarse_fisher
        );
    }

    #[test]
    fn excited_probability_is_bounded(beta in 0.1f64..5.0, gt in 0.0f64..30.0, delta in 0.0f64..2.0) {
        let spec = JcProbeSpec { omega_d: 1.0 + delta, ..JcProbeSpec::resonant(1.0, 1.0).with_gt(gt) };
        let p = jc_excited_probability(beta, &spec).unwrap();
        // at most every excited-mode weight
        let cap = (-beta).exp();
        prop_assert!(p >= 0.0 && p <= cap + 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn povm_information_is_convex(
        (levels, a, b) in spectrum_strategy(2, 8).prop_flat_map(|lv| {
            let n = lv.len();
            (Just(lv), (2usize..5).prop_flat_map(move |d| (povm_strategy(d, n), povm_strategy(d, n))))
                .prop_map(|(lv, (a, b))| (lv, a, b))
        }),
        beta in 0.1f64..2.0,
        lambda in 0.0f64..1.0,
    ) {
        let ens = ensemble(&levels, beta);
        let ca = povm_fisher(&ens, &a).unwrap().value;
        let cb = povm_fisher(&ens, &b).unwrap().value;
        let cm = povm_fisher(&ens, &a.mix(&b, lambda).unwrap()).unwrap().value;
        prop_assert!(cm <= lambda * ca + (1.0 - lambda) * cb + 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn projective_measurements_dominate(
        (levels, povm) in spectrum_strategy(2, 8).prop_flat_map(|lv| {
            let n = lv.len();
            (Just(lv), (2usize..=n.min(4)).prop_flat_map(move |d| povm_strategy(d, n)))
        }),
        beta in 0.1f64..2.0,
    ) {
        let ens = ensemble(&levels, beta);
        let best = brute_force(&ens, povm.outcomes(), true).unwrap().coarse_fisher;
        prop_assert!(povm_fisher(&ens, &povm).unwrap().value <= best + 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn lloyd_max_reaches_dynamic_programming(levels in spectrum_strategy(10, 200), beta in 0.1f64..2.0, d in 2usize..6) {
        let ens = ensemble(&levels, beta);
        let dp = binned_fisher(&ens, &dp_exact(&ens, d).unwrap()).unwrap().coarse_fisher;
        let cfg = SolverConfig { mode: SolverMode::LloydMax, num_starts: 8, ..SolverConfig::with_bins(d) };
        let lm = lloyd_max(&ens, &cfg).unwrap().report.coarse_fisher;
        prop_assert!(lm >= dp * (1.0 - 1e-6), "lloyd-max {} vs dp {}", lm, dp);
    }

    #[test]
    fn converged_continuous_solutions_are_fixed_points(mean in -2.0f64..2.0, sigma in 0.3f64..3.0, beta in 0.1f64..3.0, d in 2usize..8, linear in any::<bool>()) {
        let model = if linear { Model::LinearDos {} } else { Model::GaussianDos { mean, sigma } };
        let ens = build_ensemble(&model, beta).unwrap();
        let cfg = SolverConfig::with_bins(d);
        let out = solve(&ens, &cfg).unwrap();
        prop_assume!(out.record.best().converged);
        let eps = out.binning.bin_energies(&ens).unwrap();
        let spread = ens.variance().sqrt();
        for (k, b) in out.binning.cuts().iter().enumerate() {
            let mid = 0.5 * (eps[k] + eps[k + 1]);
            prop_assert!((b - mid).abs() / spread <= cfg.rel_tol * 10.0, "cut {} off by {}", k, (b - mid).abs() / spread);
        }
    }

    #[test]
    fn gaussian_optimum_is_symmetric(mean in -2.0f64..2.0, sigma in 0.3f64..3.0, beta in 0.0f64..2.0, d in 2usize..=8) {
        let ens = build_ensemble(&Model::GaussianDos { mean, sigma }, beta).unwrap();
        let cuts = solve(&ens, &SolverConfig::with_bins(d)).unwrap().binning.cuts().to_vec();
        let mu = ens.mean_energy();
        for (lo, hi) in cuts.iter().zip(cuts.iter().rev()) {
            prop_assert!(((lo - mu) + (hi - mu)).abs() <= 1e-6 * sigma);
        }
    }

    #[test]
    fn tight_binding_matches_free_fermions(n in 2usize..30, eps_onsite in -1.0f64..1.0, t_hop in 0.1f64..1.5, beta in 0.05f64..2.0) {
        let model = Model::TightBinding { n, eps_onsite, t_hop, grid_resolution: TIGHT_BINDING_RESOLUTION };
        let ens = build_ensemble(&model, beta).unwrap();
        let (mean, var) = free_fermion_moments(&tight_binding_modes(n, eps_onsite, t_hop), beta);
        let modes = tight_binding_modes(n, eps_onsite, t_hop);
        let scale: f64 = modes.iter().map(|e| e.abs()).sum();
        prop_assert!((ens.mean_energy() - mean).abs() <= 1e-6 * mean.abs().max(scale * 1e-3));
        // Splitting each mode between two nodes adds at most f h^2 / 4, the hat kernel h^2 / 6.
        let h = scale / TIGHT_BINDING_RESOLUTION as f64;
        let occupied: f64 = modes.iter().map(|e| 1.0 / ((beta * e).exp() + 1.0)).sum();
        let grid_error = (occupied / 4.0 + 1.0 / 6.0) * h * h * 1.01;
        prop_assert!((ens.variance() - var).abs() <= grid_error.max(1e-6 * var), "var {} vs {}", ens.variance(), var);
    }

    #[test]
    fn probe_slope_matches_differences(beta in 0.2f64..4.0, gt in 0.05f64..6.0, delta in 0.0f64..1.5) {
        let spec = JcProbeSpec { omega_d: 1.0 + delta, ..JcProbeSpec::resonant(1.0, 1.0).with_gt(gt) };
        let t = 1.0 / beta;
        let h = t * 1e-5;
        let p = |t: f64| jc_excited_probability(1.0 / t, &spec).unwrap();
        let fd = (p(t + h) - p(t - h)) / (2.0 * h);
        let analytic = jc_excited_probability_slope(beta, &spec).unwrap();
        prop_assert!((fd - analytic).abs() <= 1e-5 * analytic.abs().max(1e-8));
    }

    #[test]
    fn estimation_is_seed_deterministic(seed in any::<u64>(), n in 1u64..5000, cut in -2.0f64..0.0) {
        let spec = ExperimentSpec {
            model: Model::GaussianDos { mean: 0.0, sigma: 1.0 },
            t_star: 1.0,
            binning: Binning::new(vec![cut]).unwrap(),
            n,
            trials: 4,
            seed,
        };
        prop_assert_eq!(sample_outcomes(&spec).unwrap(), sample_outcomes(&spec).unwrap());
    }
}

#[test]
fn qubit_ratio_curve_tracks_gaussian_approximation() {
    let beta = 0.6;
    let s = qubit_excitation(beta);
    for n in [100usize, 200, 400] {
        let ens = build_ensemble(&Model::NQubits { n }, beta).unwrap();
        let worst = (0..n)
            .map(|k| {
                let b = k as f64 + 0.5;
                let exact = binned_fisher(&ens, &Binning::new(vec![b]).unwrap()).unwrap().ratio;
                (exact - nqubit_large_n_ratio(n, s, b)).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst <= 0.02, "N = {n}: sup gap {worst}");
    }
}

#[test]
fn cold_probe_first_peak_is_near_quarter_period() {
    let eval = JcEvaluator::new(12.0, &JcProbeSpec::resonant(1.0, 1.0)).unwrap();
    let f: Vec<f64> = (1..4000).map(|k| eval.fisher(k as f64 * 1e-3).value).collect();
    let first = (1..f.len() - 1).find(|&i| f[i] >= f[i - 1] && f[i] > f[i + 1]).unwrap();
    assert!(((first + 1) as f64 * 1e-3 - std::f64::consts::FRAC_PI_2).abs() < 1e-2);
}

#[test]
fn report_is_identical_for_identical_specs() {
    let ens = build_ensemble(&Model::NQubits { n: 60 }, 0.6).unwrap();
    let spec = ExperimentSpec {
        model: Model::NQubits { n: 60 },
        t_star: 1.0 / 0.6,
        binning: dp_exact(&ens, 2).unwrap(),
        n: 20_000,
        trials: 40,
        seed: 99,
    };
    let a = cramer_rao_report(&spec).unwrap();
    assert_eq!(a, cramer_rao_report(&spec).unwrap());
    assert!(a.respects_bound());
}
