//! Built-in test geometries.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::domain::DomainSpec;
use crate::error::{OgcError, Result};
use crate::geometry::{dot, norm, ChartDomain, ConformalFactor, MetricField};

/// Round unit sphere in the stereographic chart from the north pole.
/// The chart origin is the south pole and |u| = tan(θ/2) for colatitude θ.
pub fn stereographic_sphere(chart_radius: f64) -> MetricField {
    let chart = ChartDomain::Ball { center: vec![0.0, 0.0], radius: chart_radius };
    MetricField::conformal(
        chart,
        ConformalFactor {
            f: Arc::new(|u: &[f64]| {
                let s = dot(u, u);
                4.0 / ((1.0 + s) * (1.0 + s))
            }),
            grad: Arc::new(|u: &[f64]| {
                let s = dot(u, u);
                let c = -16.0 / (1.0 + s).powi(3);
                u.iter().map(|x| c * x).collect()
            }),
        },
    )
}

/// Choice of boundary function for the spherical cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CapPhi {
    /// φ = cos r − cos θ (smooth everywhere in the chart).
    #[default]
    Height,
    /// φ = θ − r (signed geodesic distance to the boundary circle).
    Distance,
}

/// Geodesic ball of radius `r` around the south pole, `r ∈ (π/2, π)`.
pub fn sphere_cap(r: f64, choice: CapPhi) -> Result<DomainSpec> {
    if !(r > PI / 2.0 && r < PI) {
        return Err(OgcError::InvalidInput(format!("cap radius {r} must lie in (pi/2, pi)")));
    }
    let field = stereographic_sphere(20.0);
    let cos_r = r.cos();
    let (phi, dphi, ddphi, dmax, theta_hi): (_, _, _, f64, f64) = match choice {
        CapPhi::Height => {
            let dmax = 0.9 * (-cos_r).min(1.0 + cos_r);
            let phi: crate::geometry::ScalarFn = Arc::new(move |u: &[f64]| {
                let s = dot(u, u);
                cos_r - (1.0 - s) / (1.0 + s)
            });
            let dphi: crate::geometry::VectorFn = Arc::new(|u: &[f64]| {
                let s = dot(u, u);
                let c = 4.0 / ((1.0 + s) * (1.0 + s));
                u.iter().map(|x| c * x).collect()
            });
            let ddphi: crate::domain::MatrixFn = Arc::new(|u: &[f64]| {
                let s = dot(u, u);
                let a = 4.0 / ((1.0 + s) * (1.0 + s));
                let b = 16.0 / (1.0 + s).powi(3);
                let n = u.len();
                DMatrix::from_fn(n, n, |i, j| if i == j { a } else { 0.0 } - b * u[i] * u[j])
            });
            (phi, dphi, ddphi, dmax, (cos_r - dmax).max(-1.0).acos())
        }
        CapPhi::Distance => {
            let dmax = 0.9 * (r - PI / 2.0).min(PI - r);
            let phi: crate::geometry::ScalarFn = Arc::new(move |u: &[f64]| 2.0 * norm(u).atan() - r);
            let dphi: crate::geometry::VectorFn = Arc::new(|u: &[f64]| {
                let rho = norm(u);
                let c = 2.0 / ((1.0 + rho * rho) * rho);
                u.iter().map(|x| c * x).collect()
            });
            let ddphi: crate::domain::MatrixFn = Arc::new(|u: &[f64]| {
                let rho = norm(u);
                let h1 = 2.0 / (1.0 + rho * rho);
                let h2 = -4.0 * rho / ((1.0 + rho * rho) * (1.0 + rho * rho));
                let n = u.len();
                DMatrix::from_fn(n, n, |i, j| {
                    let uu = u[i] * u[j] / (rho * rho);
                    let id = if i == j { 1.0 } else { 0.0 };
                    h2 * uu + h1 / rho * (id - uu)
                })
            });
            (phi, dphi, ddphi, dmax, (r + dmax).min(PI - 1e-3))
        }
    };
    let sampling_radius = ((0.5 * theta_hi).tan() * 1.05).min(19.0);
    Ok(DomainSpec::new(
        format!("sphere_cap(r={r})"),
        field,
        phi,
        dphi,
        ddphi,
        vec![0.0, 0.0],
        ChartDomain::Ball { center: vec![0.0, 0.0], radius: sampling_radius },
        dmax,
    ))
}

/// Flat half-plane {q₂ < 0} with φ = q₂.
pub fn half_plane() -> DomainSpec {
    let chart = ChartDomain::Box { lo: vec![-50.0, -50.0], hi: vec![50.0, 50.0] };
    DomainSpec::new(
        "half_plane",
        MetricField::euclidean(chart),
        Arc::new(|q: &[f64]| q[1]),
        Arc::new(|_q: &[f64]| vec![0.0, 1.0]),
        Arc::new(|_q: &[f64]| DMatrix::zeros(2, 2)),
        vec![0.0, -1.0],
        ChartDomain::Box { lo: vec![-3.0, -1.0], hi: vec![3.0, 1.0] },
        0.5,
    )
}

/// Euclidean disk of radius `radius` with φ = ‖q‖ − radius.
pub fn euclidean_disk(radius: f64) -> Result<DomainSpec> {
    if !(radius > 0.0) {
        return Err(OgcError::InvalidInput(format!("disk radius {radius} must be positive")));
    }
    let chart = ChartDomain::Box { lo: vec![-3.0 * radius; 2], hi: vec![3.0 * radius; 2] };
    Ok(DomainSpec::new(
        format!("euclidean_disk(R={radius})"),
        MetricField::euclidean(chart),
        Arc::new(move |q: &[f64]| norm(q) - radius),
        Arc::new(|q: &[f64]| {
            let r = norm(q);
            q.iter().map(|x| x / r).collect()
        }),
        Arc::new(|q: &[f64]| {
            let r = norm(q);
            let n = q.len();
            DMatrix::from_fn(n, n, |i, j| (if i == j { 1.0 } else { 0.0 } - q[i] * q[j] / (r * r)) / r)
        }),
        vec![0.0, 0.0],
        ChartDomain::Ball { center: vec![0.0, 0.0], radius: 1.5 * radius },
        0.5 * radius,
    ))
}
