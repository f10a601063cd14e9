//! Discrete first variation on a curve portion: the node chain of an
//! interval, its energy gradient, an H¹-type preconditioner and the
//! projection of steepest descent onto the outward cone at contact nodes.

use nalgebra::{DMatrix, DVector};

use crate::domain::DomainSpec;
use crate::error::{OgcError, Result};
use crate::geometry::{dist, MetricField};
use crate::pathspace::DiscreteCurve;

/// Nodes of x on [a, b]: the two (possibly off-grid) endpoints and the grid
/// nodes strictly between them.
#[derive(Debug, Clone)]
pub struct Chain {
    pub dim: usize,
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    /// Grid index of each chain node, `None` for off-grid endpoints.
    pub grid: Vec<Option<usize>>,
}

const SNAP: f64 = 1e-12;

impl Chain {
    pub fn from_interval(x: &DiscreteCurve, a: f64, b: f64) -> Chain {
        let n = x.n();
        let dim = x.dim();
        let mut t = Vec::new();
        let mut y = Vec::new();
        let mut grid = Vec::new();
        let snap = |s: f64| -> Option<usize> {
            let i = (s * n as f64).round();
            ((s * n as f64 - i).abs() < 1e-9).then_some(i as usize)
        };
        t.push(a);
        grid.push(snap(a));
        y.extend(x.eval(a));
        for i in 0..=n {
            let s = x.param(i);
            if s > a + SNAP && s < b - SNAP && snap(a) != Some(i) && snap(b) != Some(i) {
                t.push(s);
                grid.push(Some(i));
                y.extend_from_slice(x.node(i));
            }
        }
        t.push(b);
        grid.push(snap(b));
        y.extend(x.eval(b));
        if let Some(i) = grid[0] {
            y[..dim].copy_from_slice(x.node(i));
        }
        if let Some(i) = *grid.last().unwrap() {
            let m = t.len() - 1;
            y[m * dim..].copy_from_slice(x.node(i));
        }
        Chain { dim, t, y, grid }
    }

    /// Chain on [0, 1] through the given uniform-grid curve.
    pub fn from_curve(x: &DiscreteCurve) -> Chain {
        Chain::from_interval(x, 0.0, 1.0)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    #[inline]
    pub fn node(&self, j: usize) -> &[f64] {
        &self.y[j * self.dim..(j + 1) * self.dim]
    }

    #[inline]
    pub fn h(&self, k: usize) -> f64 {
        self.t[k + 1] - self.t[k]
    }

    fn delta_mid(&self, k: usize) -> (Vec<f64>, Vec<f64>) {
        let (p, q) = (self.node(k), self.node(k + 1));
        let d = q.iter().zip(p).map(|(u, v)| u - v).collect();
        let m = q.iter().zip(p).map(|(u, v)| 0.5 * (u + v)).collect();
        (d, m)
    }

    /// ½ Σ g(mid)(Δ, Δ)/h.
    pub fn energy(&self, field: &MetricField) -> f64 {
        (0..self.len() - 1)
            .map(|k| {
                let (d, m) = self.delta_mid(k);
                0.5 * field.quad(&m, &d) / self.h(k)
            })
            .sum()
    }

    /// (b − a)·energy: the affine-invariant portion functional.
    pub fn product(&self, field: &MetricField) -> f64 {
        (self.t[self.len() - 1] - self.t[0]) * self.energy(field)
    }

    /// ∂energy/∂y, flat node-major.
    pub fn gradient(&self, field: &MetricField) -> Vec<f64> {
        let dim = self.dim;
        let mut g = vec![0.0; self.y.len()];
        for k in 0..self.len() - 1 {
            let (d, m) = self.delta_mid(k);
            let h = self.h(k);
            let gd = field.lower(&m, &d);
            let dq = field.dquad(&m, &d);
            for i in 0..dim {
                let lin = gd[i] / h;
                let quad = 0.25 * dq[i] / h;
                g[k * dim + i] += -lin + quad;
                g[(k + 1) * dim + i] += lin + quad;
            }
        }
        g
    }

    pub fn is_constant(&self, tol: f64) -> bool {
        let p = self.node(0);
        (0..self.len()).all(|j| dist(self.node(j), p) <= tol)
    }

    /// Linear resampling of the chain onto `n` uniform cells of [0, 1].
    pub fn to_curve(&self, n: usize) -> DiscreteCurve {
        let (a, b) = (self.t[0], self.t[self.len() - 1]);
        DiscreteCurve::from_fn(self.dim, n, |s| {
            let tt = a + s * (b - a);
            let k = self.t.partition_point(|&v| v < tt).saturating_sub(1).min(self.len() - 2);
            let w = ((tt - self.t[k]) / self.h(k)).clamp(0.0, 1.0);
            let (p, q) = (self.node(k), self.node(k + 1));
            p.iter().zip(q).map(|(u, v)| u + w * (v - u)).collect()
        })
    }
}

/// Weighted stiffness plus endpoint mass, identical for every coordinate:
/// ‖V‖² = ½(½(w_a|V₀|² + w_b|V_M|²) + Σ w_k |ΔV_k|²/h_k).
#[derive(Debug, Clone)]
pub struct Preconditioner {
    dim: usize,
    diag: Vec<f64>,
    off: Vec<f64>,
}

fn weight(field: &MetricField, q: &[f64]) -> f64 {
    let n = field.dim();
    let mut tr = 0.0;
    let mut e = vec![0.0; n];
    for i in 0..n {
        e[i] = 1.0;
        tr += field.quad(q, &e);
        e[i] = 0.0;
    }
    tr / n as f64
}

impl Preconditioner {
    pub fn new(chain: &Chain, field: &MetricField) -> Preconditioner {
        let m = chain.len();
        let mut diag = vec![0.0; m];
        let mut off = vec![0.0; m - 1];
        let span = chain.t[m - 1] - chain.t[0];
        for k in 0..m - 1 {
            let (_, mid) = chain.delta_mid(k);
            let w = weight(field, &mid);
            let c = 0.5 * w / chain.h(k);
            // Lumped mass, scaled so that it balances the stiffness on any span.
            let mass = 0.25 * w * chain.h(k) / (span * span);
            diag[k] += c + mass;
            diag[k + 1] += c + mass;
            off[k] = -c;
        }
        diag[0] += 0.25 * weight(field, chain.node(0));
        diag[m - 1] += 0.25 * weight(field, chain.node(m - 1));
        Preconditioner { dim: chain.dim, diag, off }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let (m, dim) = (self.diag.len(), self.dim);
        let mut out = vec![0.0; v.len()];
        for j in 0..m {
            for i in 0..dim {
                let mut s = self.diag[j] * v[j * dim + i];
                if j > 0 {
                    s += self.off[j - 1] * v[(j - 1) * dim + i];
                }
                if j + 1 < m {
                    s += self.off[j] * v[(j + 1) * dim + i];
                }
                out[j * dim + i] = s;
            }
        }
        out
    }

    /// P⁻¹ r by the Thomas algorithm, one coordinate at a time.
    pub fn solve(&self, r: &[f64]) -> Vec<f64> {
        let (m, dim) = (self.diag.len(), self.dim);
        let mut out = vec![0.0; r.len()];
        let mut cp = vec![0.0; m];
        let mut dp = vec![0.0; m];
        for i in 0..dim {
            cp[0] = if m > 1 { self.off[0] / self.diag[0] } else { 0.0 };
            dp[0] = r[i] / self.diag[0];
            for j in 1..m {
                let denom = self.diag[j] - self.off[j - 1] * cp[j - 1];
                cp[j] = if j + 1 < m { self.off[j] / denom } else { 0.0 };
                dp[j] = (r[j * dim + i] - self.off[j - 1] * dp[j - 1]) / denom;
            }
            out[(m - 1) * dim + i] = dp[m - 1];
            for j in (0..m - 1).rev() {
                out[j * dim + i] = dp[j] - cp[j] * out[(j + 1) * dim + i];
            }
        }
        out
    }

    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.apply(u).iter().zip(v).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self, v: &[f64]) -> f64 {
        self.inner(v, v).max(0.0).sqrt()
    }
}

/// Chain nodes where the outward cone constraint applies: both endpoints and
/// interior nodes with φ ≥ −tol.
pub fn contact_nodes(chain: &Chain, spec: &DomainSpec, tol: f64) -> Vec<usize> {
    let m = chain.len();
    (0..m).filter(|&j| j == 0 || j == m - 1 || spec.phi(chain.node(j)) >= -tol).collect()
}

#[derive(Debug, Clone)]
pub struct ConeProjection {
    /// Descent direction V* = argmin_{V ∈ cone} ½‖V‖²_P + ⟨G, V⟩.
    pub v: Vec<f64>,
    /// Multiplier per contact node (same order as `contacts`).
    pub multipliers: Vec<f64>,
    pub contacts: Vec<usize>,
    /// ‖V*‖_P, which equals −⟨G, V*⟩ / ‖V*‖_P.
    pub norm: f64,
}

/// Steepest descent for the gradient `grad`, restricted to dφ(V_j) ≥ 0 at
/// the contact nodes. Solved through the dual non-negative QP.
pub fn project_descent(chain: &Chain, spec: &DomainSpec, precond: &Preconditioner, grad: &[f64], contacts: &[usize]) -> ConeProjection {
    let dim = chain.dim;
    let len = grad.len();
    let cov: Vec<Vec<f64>> = contacts.iter().map(|&j| spec.dphi(chain.node(j))).collect();
    let embed = |k: usize| -> Vec<f64> {
        let mut c = vec![0.0; len];
        c[contacts[k] * dim..(contacts[k] + 1) * dim].copy_from_slice(&cov[k]);
        c
    };
    let pinv_g = precond.solve(grad);
    let z: Vec<Vec<f64>> = (0..contacts.len()).map(|k| precond.solve(&embed(k))).collect();
    let nc = contacts.len();
    // Q = CᵀP⁻¹C and b = CᵀP⁻¹G; only the contact slots of each column matter.
    let at = |v: &[f64], k: usize| -> f64 {
        let j = contacts[k];
        cov[k].iter().zip(&v[j * dim..(j + 1) * dim]).map(|(a, b)| a * b).sum()
    };
    let q = DMatrix::from_fn(nc, nc, |r, c| at(&z[c], r));
    let b = DVector::from_fn(nc, |r, _| at(&pinv_g, r));
    let mu = nnqp(&q, &b);
    let mut v: Vec<f64> = pinv_g.iter().map(|x| -x).collect();
    for (k, zk) in z.iter().enumerate() {
        if mu[k] != 0.0 {
            for (vi, zi) in v.iter_mut().zip(zk) {
                *vi += mu[k] * zi;
            }
        }
    }
    let norm = precond.norm(&v);
    ConeProjection { v, multipliers: mu.as_slice().to_vec(), contacts: contacts.to_vec(), norm }
}

/// min ½μᵀQμ − bᵀμ over μ ≥ 0, active-set in the Lawson–Hanson style.
pub fn nnqp(q: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = b.len();
    let mut mu = DVector::zeros(n);
    if n == 0 {
        return mu;
    }
    let scale = q.diagonal().iter().fold(0.0f64, |a, &x| a.max(x.abs())).max(1e-300);
    let tol = 1e-13 * scale * (1.0 + b.amax() / scale);
    let mut passive = vec![false; n];
    let solve_sub = |passive: &[bool]| -> DVector<f64> {
        let idx: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
        let k = idx.len();
        let mut sub = DMatrix::from_fn(k, k, |r, c| q[(idx[r], idx[c])]);
        for i in 0..k {
            sub[(i, i)] += 1e-14 * scale;
        }
        let rhs = DVector::from_fn(k, |r, _| b[idx[r]]);
        let sol = sub.clone().cholesky().map(|c| c.solve(&rhs)).or_else(|| sub.lu().solve(&rhs)).unwrap_or_else(|| DVector::zeros(k));
        let mut z = DVector::zeros(n);
        for (r, &i) in idx.iter().enumerate() {
            z[i] = sol[r];
        }
        z
    };
    for _ in 0..(3 * n + 10) {
        let w = b - q * &mu;
        let cand = (0..n).filter(|&i| !passive[i] && w[i] > tol).max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = cand else { break };
        passive[j] = true;
        for _ in 0..(3 * n + 10) {
            let z = solve_sub(&passive);
            if (0..n).filter(|&i| passive[i]).all(|i| z[i] > 0.0) {
                mu = z;
                break;
            }
            let mut alpha = 1.0f64;
            for i in 0..n {
                if passive[i] && z[i] <= 0.0 {
                    let d = mu[i] - z[i];
                    if d > 0.0 {
                        alpha = alpha.min(mu[i] / d);
                    }
                }
            }
            mu += (z - &mu) * alpha;
            for i in 0..n {
                if passive[i] && mu[i] <= 1e-15 * scale {
                    passive[i] = false;
                    mu[i] = 0.0;
                }
            }
        }
    }
    mu
}

/// Chain, preconditioner and cone-projected descent for x on [a, b].
pub fn analyze_interval(
    x: &DiscreteCurve,
    spec: &DomainSpec,
    a: f64,
    b: f64,
    contact_tol: f64,
) -> Result<(Chain, Preconditioner, Vec<f64>, ConeProjection)> {
    if !(a < b) || a < -1e-12 || b > 1.0 + 1e-12 {
        return Err(OgcError::BadInterval(format!("[{a}, {b}] is not a sub-interval of [0, 1]")));
    }
    let chain = Chain::from_interval(x, a, b);
    if chain.is_constant(1e-12) {
        return Err(OgcError::BadInterval("x is constant on the interval".into()));
    }
    let precond = Preconditioner::new(&chain, &spec.field);
    let grad = chain.gradient(&spec.field);
    let contacts = contact_nodes(&chain, spec, contact_tol);
    let proj = project_descent(&chain, spec, &precond, &grad, &contacts);
    Ok((chain, precond, grad, proj))
}
