use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI, SQRT_2};
use std::sync::Arc;

use nalgebra::DMatrix;
use ogc_core::domain::check_strong_concavity;
use ogc_core::error::OgcError;
use ogc_core::hamiltonian::*;
use ogc_core::minimax::SolveOptions;
use ogc_core::pathspace::DiscreteCurve;

fn well() -> NaturalHamiltonian {
    NaturalHamiltonian::ellipsoid(&[1.0, SQRT_2], 1.0).unwrap()
}

fn free(dim: usize, energy: f64) -> NaturalHamiltonian {
    NaturalHamiltonian {
        name: "free".into(),
        dim,
        a_upper: None,
        v: Arc::new(|_| 0.0),
        dv: Arc::new(move |_| vec![0.0; dim]),
        ddv: Arc::new(move |_| DMatrix::zeros(dim, dim)),
        energy,
        v_min: 0.0,
        argmin: vec![0.0; dim],
        extent: 10.0,
    }
}

#[test]
fn ellipsoid_rejects_bad_input() {
    assert!(matches!(NaturalHamiltonian::ellipsoid(&[1.0, 0.0], 1.0), Err(OgcError::ZeroLambda)));
    assert!(matches!(NaturalHamiltonian::ellipsoid(&[1.0], 0.0), Err(OgcError::InvalidInput(_))));
}

#[test]
fn harmonic_half_period() {
    let ham = NaturalHamiltonian::ellipsoid(&[1.0], 1.0).unwrap();
    let t = PI / SQRT_2;
    let tr = hamilton_flow(&ham, &[1.0], &[0.0], t, 1e-3).unwrap();
    let (q, p) = (tr.q.last().unwrap()[0], tr.p.last().unwrap()[0]);
    assert!((q + 1.0).abs() < 1e-6 && p.abs() < 1e-6, "{q} {p}");
    assert!((tr.times.last().unwrap() - t).abs() < 1e-12);
    for (q, p) in tr.q.iter().zip(&tr.p) {
        assert!((ham.hamiltonian(q, p) - 1.0).abs() < 1e-7);
    }
}

#[test]
fn free_particle_and_equilibrium() {
    let ham = free(2, 1.0);
    let tr = hamilton_flow(&ham, &[0.5, -1.0], &[1.0, 2.0], 3.0, 0.01).unwrap();
    for (k, t) in tr.times.iter().enumerate() {
        assert!((tr.q[k][0] - (0.5 + t)).abs() < 1e-12 && (tr.q[k][1] - (-1.0 + 2.0 * t)).abs() < 1e-12);
        assert_eq!(tr.p[k], vec![1.0, 2.0]);
    }
    let tr = hamilton_flow(&well(), &[0.0, 0.0], &[0.0, 0.0], 5.0, 0.01).unwrap();
    assert!(tr.q.iter().all(|q| q == &vec![0.0, 0.0]));
}

#[test]
fn variable_kinetic_matrix_uses_the_general_integrator() {
    // a = 2I: q̈ = −4λ²q, so ω = 2λ.
    let mut ham = NaturalHamiltonian::ellipsoid(&[1.5], 1.0).unwrap();
    ham.a_upper = Some(Arc::new(|_| DMatrix::identity(1, 1) * 2.0));
    let t = 0.7;
    let tr = hamilton_flow(&ham, &[0.3], &[0.0], t, 1e-3).unwrap();
    let q = tr.q.last().unwrap()[0];
    assert!((q - 0.3 * (3.0 * t).cos()).abs() < 1e-8, "{q}");
}

#[test]
fn coarse_steps_report_energy_drift() {
    let ham = NaturalHamiltonian::ellipsoid(&[10.0], 1.0).unwrap();
    assert!(matches!(hamilton_flow(&ham, &[0.1], &[0.0], 10.0, 0.5), Err(OgcError::EnergyDrift { .. })));
}

#[test]
fn jacobi_metric_contract() {
    let ham = well();
    for rho in [0.0, -0.1, 1.0, 2.0] {
        assert!(matches!(jacobi_metric(&ham, rho), Err(OgcError::BadRho(_))), "{rho}");
    }
    assert!(matches!(jacobi_metric(&free(2, 1.0), 0.5), Err(OgcError::BadRho(_))));

    let spec = jacobi_metric(&ham, 0.05).unwrap();
    let x = [0.3, -0.2];
    let v = 0.09 + 2.0 * 0.04;
    assert!((spec.field.conformal_factor(&x).unwrap() - (1.0 - v)).abs() < 1e-15);
    assert!((spec.phi(&x) - (v - 0.95)).abs() < 1e-15);
    assert!(spec.phi(&[0.95f64.sqrt(), 0.0]).abs() < 1e-14);
    assert!(check_strong_concavity(&spec, 200).is_strongly_concave);
}

#[test]
fn scaling_the_energy_gap_scales_lengths() {
    // λ → √2λ, E → 2E, ρ → 2ρ doubles E − V and keeps the domain.
    let a = jacobi_metric(&NaturalHamiltonian::ellipsoid(&[1.0, SQRT_2], 1.0).unwrap(), 0.05).unwrap();
    let b = jacobi_metric(&NaturalHamiltonian::ellipsoid(&[SQRT_2, 2.0], 2.0).unwrap(), 0.1).unwrap();
    let r = 0.95f64.sqrt();
    assert!(a.phi(&[r, 0.0]).abs() < 1e-14 && b.phi(&[r, 0.0]).abs() < 1e-14);
    let x = DiscreteCurve::segment(&[-r, 0.0], &[r, 0.0], 64);
    let la = ogc_core::pathspace::length(&x, &a.field, 0.0, 1.0);
    let lb = ogc_core::pathspace::length(&x, &b.field, 0.0, 1.0);
    assert!((lb - SQRT_2 * la).abs() < 1e-12, "{la} {lb}");
}

#[test]
fn reference_orbits() {
    let r = ellipsoid_reference(&[1.0, SQRT_2], 1.0).unwrap();
    assert!(!r.rational_ratio);
    assert_eq!(r.orbits.len(), 2);
    assert!((r.orbits[0].half_period - PI / SQRT_2).abs() < 1e-15);
    assert!((r.orbits[1].half_period - FRAC_PI_2).abs() < 1e-15);
    assert!((r.orbits[0].amplitude - 1.0).abs() < 1e-15);
    assert!((r.orbits[1].amplitude - FRAC_1_SQRT_2).abs() < 1e-15);
    let end = r.orbits[1].q_traj.last().unwrap();
    assert!(end[0] == 0.0 && (end[1] + FRAC_1_SQRT_2).abs() < 1e-12);

    assert!(ellipsoid_reference(&[1.0, 2.0], 1.0).unwrap().rational_ratio);
    assert!(ellipsoid_reference(&[1.0, SQRT_2], 0.0).unwrap().orbits.is_empty());
    assert!(matches!(ellipsoid_reference(&[0.0, 1.0], 1.0), Err(OgcError::ZeroLambda)));
}

#[test]
fn lift_reaches_the_turning_set() {
    let ham = well();
    let q = lift_to_turning_set(&ham, &[0.4, 0.3]).unwrap();
    assert!((ham.potential(&q) - 1.0).abs() < 1e-12);
}

#[test]
fn shooting_from_the_axes() {
    let ham = well();
    let opts = ShootingOptions::default();
    for (start, t, amp) in [([0.97, 0.0], PI / SQRT_2, 1.0), ([0.0, 0.69], FRAC_PI_2, FRAC_1_SQRT_2)] {
        let o = brake_orbit_from_point(&ham, &start, &opts).unwrap();
        assert!((o.half_period - t).abs() < 1e-8, "{} {t}", o.half_period);
        assert!((o.amplitude - amp).abs() < 1e-8);
        assert!(o.residual_p0 < 1e-6 && o.residual_pt < 1e-6);
        let q_end = o.q_traj.last().unwrap();
        assert!((ham.potential(&o.q_traj[0]) - 1.0).abs() < 1e-6 && (ham.potential(q_end) - 1.0).abs() < 1e-6);
        for (q, p) in o.q_traj.iter().zip(&o.p_traj) {
            assert!((ham.hamiltonian(q, p) - 1.0).abs() < 1e-7);
        }
        assert!(brake_symmetry_defect(&ham, &o, 1e-3).unwrap() < 1e-6);
    }
}

#[test]
fn perturbed_launch_returns_to_the_axis() {
    let ham = well();
    let o = brake_orbit_from_point(&ham, &[1.0, 1e-3], &ShootingOptions::default()).unwrap();
    assert!(o.q_traj[0][1].abs() < 1e-6, "{:?}", o.q_traj[0]);
    assert!((o.half_period - PI / SQRT_2).abs() < 1e-6);
    assert!(o.newton_iterations > 0);
}

#[test]
fn shooting_without_a_return_diverges() {
    let ham = well();
    let opts = ShootingOptions { max_time: 1.0, ..Default::default() };
    assert!(matches!(brake_orbit_from_point(&ham, &[1.0, 0.0], &opts), Err(OgcError::ShootingDiverged(_))));
}

#[test]
fn orbit_dedup() {
    let r = ellipsoid_reference(&[1.0, SQRT_2], 1.0).unwrap();
    let mut all = r.orbits.clone();
    all.extend(r.orbits.iter().cloned());
    assert_eq!(dedup_orbits(all, 1e-6).len(), 2);
}

#[test]
fn chords_approach_the_orbits_as_rho_shrinks() {
    let ham = well();
    let solve = SolveOptions { max_chords: 2, ..Default::default() };
    let reference = ellipsoid_reference(&[1.0, SQRT_2], 1.0).unwrap();
    let mut last = [f64::INFINITY; 2];
    for rho in [0.2, 0.1, 0.05] {
        let report = brake_orbits(&ham, rho, &solve, &ShootingOptions::default()).unwrap();
        assert_eq!(report.solve.chords.len(), 2);
        assert_eq!(report.orbits.len(), 2);
        for (k, orbit) in reference.orbits.iter().enumerate() {
            let track = DiscreteCurve::from_flat(2, orbit.q_traj.iter().flatten().copied().collect());
            let d = report.solve.chords.iter().map(|c| ogc_core::minimax::hausdorff(&c.curve, &track)).fold(f64::INFINITY, f64::min);
            assert!(d < last[k], "rho {rho}: {d} vs {}", last[k]);
            last[k] = d;
        }
    }
}
