use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ogc_bench::{bent_chord, cap, well};
use ogc_core::criticality::is_ogc;
use ogc_core::flows::{curve_functional, type_a_step, ConstantsLedger, LedgerOverrides};
use ogc_core::geometries::stereographic_sphere;
use ogc_core::geometry::{integrate_geodesic, minimal_geodesic};
use ogc_core::hamiltonian::{brake_orbit_from_point, hamilton_flow, ShootingOptions};
use ogc_core::minimax::{solve_existence, SolveOptions};

fn geodesics(c: &mut Criterion) {
    let field = stereographic_sphere(20.0);
    c.bench_function("integrate_geodesic/t1_h1e-3", |b| {
        b.iter(|| integrate_geodesic(&field, black_box(&[0.2, -0.1]), black_box(&[0.7, 0.4]), 1.0, 1e-3).unwrap())
    });
    c.bench_function("minimal_geodesic/cap_diameter", |b| {
        b.iter(|| minimal_geodesic(&field, black_box(&[-0.6, 0.1]), black_box(&[0.5, -0.3]), 3.0).unwrap())
    });
}

fn curves(c: &mut Criterion) {
    let spec = cap();
    let ledger = ConstantsLedger::assemble(&spec, 40.0, 0, &LedgerOverrides::default()).unwrap();
    let mut g = c.benchmark_group("curves");
    for n in [64, 256] {
        let x = bent_chord(&spec, n);
        g.bench_with_input(BenchmarkId::new("curve_functional", n), &x, |b, x| b.iter(|| curve_functional(x, &spec).unwrap()));
        g.bench_with_input(BenchmarkId::new("type_a_step", n), &x, |b, x| b.iter(|| type_a_step(x, &spec, &ledger, 1e-2).unwrap()));
        g.bench_with_input(BenchmarkId::new("is_ogc", n), &x, |b, x| b.iter(|| is_ogc(x, &spec, 0.0, 1.0).unwrap()));
    }
    g.finish();
}

fn hamiltonian(c: &mut Criterion) {
    let ham = well();
    c.bench_function("hamilton_flow/well_t5", |b| b.iter(|| hamilton_flow(&ham, black_box(&[0.5, 0.3]), &[0.0, 0.0], 5.0, 1e-3).unwrap()));
    c.bench_function("brake_orbit_from_point/perturbed_axis", |b| {
        b.iter(|| brake_orbit_from_point(&ham, black_box(&[1.0, 1e-3]), &ShootingOptions::default()).unwrap())
    });
}

fn solve(c: &mut Criterion) {
    let spec = ogc_core::geometries::sphere_cap(2.0 * std::f64::consts::PI / 3.0, ogc_core::geometries::CapPhi::Height).unwrap();
    let mut g = c.benchmark_group("solve");
    g.sample_size(10);
    g.bench_function("sphere_cap/n64_grid16", |b| {
        b.iter(|| solve_existence(&spec, &SolveOptions { n: 64, grid: 16, ..Default::default() }).unwrap())
    });
    g.finish();
}

criterion_group!(benches, geodesics, curves, hamiltonian, solve);
criterion_main!(benches);
