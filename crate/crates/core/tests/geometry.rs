use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use ogc_core::error::OgcError;
use ogc_core::geometries::stereographic_sphere;
use ogc_core::geometry::*;

fn plane() -> MetricField {
    MetricField::euclidean(ChartDomain::Box { lo: vec![-10.0; 2], hi: vec![10.0; 2] })
}

/// Stereographic metric evaluated through the general (finite-difference) path.
fn stereo_general() -> MetricField {
    MetricField::general(
        ChartDomain::Ball { center: vec![0.0, 0.0], radius: 20.0 },
        Arc::new(|u: &[f64]| {
            let s = u[0] * u[0] + u[1] * u[1];
            DMatrix::identity(2, 2) * (4.0 / ((1.0 + s) * (1.0 + s)))
        }),
    )
}

#[test]
fn flat_metric_is_identity() {
    let g = plane().metric_at(&[0.3, -1.2]).unwrap();
    assert_eq!(g, DMatrix::identity(2, 2));
}

#[test]
fn stereographic_metric_values() {
    // Independent closed form 4/(1+|u|^2)^2.
    let f = stereographic_sphere(20.0);
    let g0 = f.metric_at(&[0.0, 0.0]).unwrap();
    assert!((g0 - DMatrix::identity(2, 2) * 4.0).abs().max() < 1e-15);
    let g1 = f.metric_at(&[1.0, 0.0]).unwrap();
    assert!((g1 - DMatrix::identity(2, 2)).abs().max() < 1e-15);
}

#[test]
fn out_of_chart_is_rejected() {
    let f = stereographic_sphere(20.0);
    assert!(matches!(f.metric_at(&[25.0, 0.0]), Err(OgcError::OutOfChart(_))));
}

#[test]
fn non_positive_metric_is_rejected() {
    let f = MetricField::general(
        ChartDomain::Box { lo: vec![-1.0; 2], hi: vec![1.0; 2] },
        Arc::new(|_q: &[f64]| DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0])),
    );
    assert!(matches!(f.metric_at(&[0.0, 0.0]), Err(OgcError::NotPositiveDefinite(_))));
}

#[test]
fn flat_christoffel_vanishes() {
    let c = plane().christoffel_at(&[1.0, 2.0]).unwrap();
    assert!(c.data.iter().all(|&x| x == 0.0));
}

#[test]
fn stereographic_christoffel_oracle() {
    // Γ¹₁₁ = ∂₁ ln √f = −2u₁/(1+|u|²) for f = 4/(1+|u|²)².
    let u = [0.5, 0.0];
    let expected = -2.0 * 0.5 / 1.25;
    for field in [stereographic_sphere(20.0), stereo_general()] {
        let c = field.christoffel_at(&u).unwrap();
        assert!((c.get(0, 0, 0) - expected).abs() < 1e-8, "{}", c.get(0, 0, 0));
        assert!((expected + 0.8).abs() < 1e-15);
    }
}

#[test]
fn christoffel_lower_symmetry_is_exact() {
    for field in [stereographic_sphere(20.0), stereo_general()] {
        let c = field.christoffel_at(&[0.3, -0.7]).unwrap();
        for k in 0..2 {
            assert_eq!(c.get(k, 0, 1), c.get(k, 1, 0));
        }
    }
}

#[test]
fn straight_line_geodesic() {
    let t = integrate_geodesic(&plane(), &[0.0, 0.0], &[1.0, 0.0], 1.0, 1e-3).unwrap();
    let e = t.endpoint();
    assert!((e[0] - 1.0).abs() < 1e-12 && e[1].abs() < 1e-12);
}

#[test]
fn great_circle_period() {
    let f = stereographic_sphere(20.0);
    // Start off the pole so the circle stays away from the chart's point at infinity.
    let q0 = [0.3, 0.0];
    let s = 0.09f64;
    let v0 = [0.0, (1.0 + s) / 2.0];
    let t = integrate_geodesic(&f, &q0, &v0, 2.0 * PI, 1e-3).unwrap();
    let e = t.endpoint();
    assert!((e[0] - q0[0]).abs() < 1e-6 && (e[1] - q0[1]).abs() < 1e-6, "{e:?}");
}

#[test]
fn speed_is_conserved() {
    let f = stereographic_sphere(20.0);
    let t = integrate_geodesic(&f, &[0.2, 0.1], &[0.7, -0.4], 1.0, 1e-3).unwrap();
    let e0 = f.quad(&t.points[0], &t.velocities[0]);
    let e1 = f.quad(t.endpoint(), t.velocities.last().unwrap());
    assert!((e1 - e0).abs() < 1e-8 * e0);
}

#[test]
fn euclidean_minimal_geodesic() {
    let t = minimal_geodesic(&plane(), &[0.0, 0.0], &[3.0, 4.0], 10.0).unwrap();
    assert!((t.length(&plane()) - 5.0).abs() < 1e-12);
}

#[test]
fn stereographic_minimal_geodesic_length() {
    let f = stereographic_sphere(20.0);
    let q = [(0.5f64).tan(), 0.0];
    let t = minimal_geodesic(&f, &[0.0, 0.0], &q, 3.0).unwrap();
    assert!((t.length(&f) - 1.0).abs() < 1e-7, "{}", t.length(&f));
    let e = t.endpoint();
    assert!(dist(e, &q) < 1e-9);
}

#[test]
fn coincident_endpoints_give_constant_geodesic() {
    let f = stereographic_sphere(20.0);
    let t = minimal_geodesic(&f, &[0.4, 0.4], &[0.4, 0.4], 1.0).unwrap();
    assert_eq!(t.length(&f), 0.0);
}

#[test]
fn too_far_apart_is_reported() {
    let r = minimal_geodesic(&plane(), &[0.0, 0.0], &[3.0, 4.0], 1.0);
    assert!(matches!(r, Err(OgcError::TooFarApart { .. })));
}

#[test]
fn injectivity_bound_flat_hits_cap() {
    let region = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
    let opts = InjectivityOptions { cap: 3.0, ..Default::default() };
    let r = injectivity_radius_lower_bound(&plane(), &region, &opts).unwrap();
    assert_eq!(r, 3.0);
}

#[test]
fn injectivity_bound_sphere_cap_region() {
    let f = stereographic_sphere(20.0);
    let region: Vec<Vec<f64>> = (0..8).map(|k| vec![0.2 * k as f64, 0.1]).collect();
    let r = injectivity_radius_lower_bound(&f, &region, &InjectivityOptions::default()).unwrap();
    assert!((PI / 2.0..=PI).contains(&r), "{r}");
}

#[test]
fn injectivity_bound_empty_region() {
    let r = injectivity_radius_lower_bound(&plane(), &[], &InjectivityOptions::default());
    assert!(matches!(r, Err(OgcError::DegenerateRegion(_))));
}
