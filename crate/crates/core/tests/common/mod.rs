#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use ogc_core::pathspace::DiscreteCurve;

/// 1D discrete energy along the chart u₁-axis for the stereographic metric,
/// midpoint rule: ½ Σ f(m_k) d_k² / h with f(u) = 4/(1+u²)².
fn grad_1d(r: &[f64], h: f64) -> Vec<f64> {
    let f = |u: f64| 4.0 / (1.0 + u * u).powi(2);
    let df = |u: f64| -16.0 * u / (1.0 + u * u).powi(3);
    let n = r.len() - 1;
    let mut g = vec![0.0; n + 1];
    for k in 0..n {
        let d = r[k + 1] - r[k];
        let m = 0.5 * (r[k + 1] + r[k]);
        let lin = f(m) * d / h;
        let quad = 0.25 * df(m) * d * d / h;
        g[k] += -lin + quad;
        g[k + 1] += lin + quad;
    }
    g
}

/// Discrete critical meridian of the cap of radius `r` (endpoints ±tan(r/2)),
/// relaxed by Newton with a finite-difference Jacobian.
pub fn discrete_meridian(r: f64, n: usize) -> DiscreteCurve {
    let h = 1.0 / n as f64;
    let mut x: Vec<f64> = (0..=n).map(|i| (0.5 * (-r + 2.0 * r * i as f64 * h)).tan()).collect();
    for _ in 0..30 {
        let g = grad_1d(&x, h);
        let res: f64 = g[1..n].iter().map(|v| v.abs()).fold(0.0, f64::max);
        if res < 1e-14 {
            break;
        }
        let mut jac = DMatrix::zeros(n - 1, n - 1);
        for j in 1..n {
            let e = 1e-7 * (1.0 + x[j].abs());
            let mut xp = x.clone();
            xp[j] += e;
            let gp = grad_1d(&xp, h);
            xp[j] -= 2.0 * e;
            let gm = grad_1d(&xp, h);
            for i in 1..n {
                jac[(i - 1, j - 1)] = (gp[i] - gm[i]) / (2.0 * e);
            }
        }
        let rhs = DVector::from_fn(n - 1, |i, _| -g[i + 1]);
        let dx = jac.lu().solve(&rhs).unwrap();
        for j in 1..n {
            x[j] += dx[j - 1];
        }
    }
    DiscreteCurve::from_fn(2, n, |s| vec![x[(s * n as f64).round() as usize], 0.0])
}

pub const CAP_R: f64 = 2.0 * PI / 3.0;
