use num_bigint::BigUint;
use std::f64::consts::PI;

use thermobin_core::ising2d::{
    critical_beta, criticality_binning_study, cumulants, exact_dos, load_many, load_or_compute, IsingDos,
};

fn critical_sizes() -> Vec<IsingDos> {
    load_many(&[8, 16, 32], None).unwrap()
}

#[test]
fn ground_state_is_doubly_degenerate() {
    for size in [4, 6, 8, 10] {
        let dos = exact_dos(size).unwrap();
        let n = (size * size) as i64;
        assert_eq!(dos.degeneracy(-2 * n), BigUint::from(2u32));
        assert_eq!(dos.degeneracy(2 * n), BigUint::from(2u32));
        // single flips cost 8 above the ground state
        assert_eq!(dos.degeneracy(-2 * n + 4), BigUint::from(0u32));
        assert_eq!(dos.degeneracy(-2 * n + 8), BigUint::from(2 * n as u32));
    }
}

#[test]
fn critical_binary_ratio_regression() {
    // frozen from the first verified exact-DOS run
    let dos = load_many(&[32], None).unwrap().remove(0);
    let report = criticality_binning_study(&dos, critical_beta(), 2).unwrap();
    assert!((report.ratio - 0.650978213).abs() < 5e-10, "ratio {}", report.ratio);
    assert!((report.ratio - 2.0 / PI).abs() < 0.05);
}

#[test]
fn off_critical_binary_ratio_is_near_gaussian() {
    let dir = tempfile::tempdir().unwrap();
    let dos = load_or_compute(8, dir.path()).unwrap();
    let report = criticality_binning_study(&dos, 0.3, 2).unwrap();
    assert!((report.ratio - 2.0 / PI).abs() < 0.05, "ratio {}", report.ratio);
    // second load comes from the cache and is identical
    assert_eq!(load_or_compute(8, dir.path()).unwrap(), dos);
}

#[test]
fn critical_asymmetry_decays() {
    let beta = critical_beta();
    let skew: Vec<f64> = critical_sizes()
        .iter()
        .map(|dos| {
            let k = cumulants(dos, beta);
            k.kappa3.cbrt().abs() / k.kappa2.sqrt()
        })
        .collect();
    assert!(skew.windows(2).all(|w| w[1] < w[0]), "{skew:?}");
}

#[test]
fn critical_fourth_cumulant_becomes_negligible() {
    let beta = critical_beta();
    let sizes = critical_sizes();
    let reports: Vec<_> = sizes.iter().map(|dos| cumulants(dos, beta)).collect();
    // kappa4 is the curvature of kappa2, which peaks next to the critical point
    assert!(reports.iter().all(|k| k.kappa4 < 0.0), "{reports:?}");
    assert!(reports.windows(2).all(|w| w[1].kappa4.abs() > w[0].kappa4.abs()));
    let kurtosis: Vec<f64> = reports.iter().map(|k| k.kappa4.abs().powf(0.25) / k.kappa2.sqrt()).collect();
    assert!(kurtosis.windows(2).all(|w| w[1] < w[0]), "{kurtosis:?}");
}
