use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use thermobin_core::binning::{dp_exact, lloyd_max, SolverConfig};
use thermobin_core::fisher::binned_fisher;
use thermobin_core::ising2d::{critical_beta, criticality_binning_study, exact_dos};
use thermobin_core::{build_ensemble, Model};

fn dp(c: &mut Criterion) {
    let mut group = c.benchmark_group("dp_exact");
    for n in [50usize, 170, 400] {
        let ensemble = build_ensemble(&Model::NQubits { n }, 0.5).unwrap();
        for d in [3usize, 8] {
            group.bench_with_input(BenchmarkId::new(format!("n_qubits_{n}"), d), &d, |b, &d| {
                b.iter(|| dp_exact(black_box(&ensemble), d).unwrap())
            });
        }
    }
    group.finish();
}

fn lloyd(c: &mut Criterion) {
    let mut group = c.benchmark_group("lloyd_max");
    let models = [
        ("gaussian", Model::GaussianDos { mean: 0.0, sigma: 1.0 }),
        ("linear_dos", Model::LinearDos {}),
        (
            "tight_binding_64",
            Model::TightBinding {
                n: 64,
                eps_onsite: 1.0,
                t_hop: 0.3,
                grid_resolution: 1 << 14,
            },
        ),
    ];
    for (name, model) in models {
        let ensemble = build_ensemble(&model, 1.0).unwrap();
        for d in [2usize, 5] {
            let config = SolverConfig::with_bins(d);
            group.bench_with_input(BenchmarkId::new(name, d), &config, |b, config| {
                b.iter(|| lloyd_max(black_box(&ensemble), config).unwrap())
            });
        }
    }
    group.finish();
}

fn evaluation(c: &mut Criterion) {
    let ensemble = build_ensemble(&Model::GaussianDos { mean: 0.0, sigma: 1.0 }, 1.0).unwrap();
    let binning = SolverConfig::with_bins(8);
    let cuts = lloyd_max(&ensemble, &binning).unwrap().binning;
    c.bench_function("binned_fisher/gaussian_8", |b| {
        b.iter(|| binned_fisher(black_box(&ensemble), black_box(&cuts)).unwrap())
    });
}

fn ising(c: &mut Criterion) {
    let mut group = c.benchmark_group("ising");
    group.sample_size(10);
    for l in [8usize, 16, 32] {
        group.bench_with_input(BenchmarkId::new("exact_dos", l), &l, |b, &l| b.iter(|| exact_dos(l).unwrap()));
    }
    let dos = exact_dos(32).unwrap();
    group.bench_function("critical_binning_32_d4", |b| {
        b.iter(|| criticality_binning_study(black_box(&dos), critical_beta(), 4).unwrap())
    });
    group.finish();
}

criterion_group!(benches, dp, lloyd, evaluation, ising);
criterion_main!(benches);
