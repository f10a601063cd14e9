//! Boundary function φ, the shell δ₀, the gradient bound K₀, the normalized
//! gradient flows η± and the boundary projection π.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{OgcError, Result};
use crate::geometry::{g_orthonormal_complement, norm, ChartDomain, MetricField, ScalarFn, VectorFn};

pub type MatrixFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

/// Tolerance on |φ| for a point to count as a boundary point in public checks.
pub const BOUNDARY_TOL: f64 = 1e-6;

#[derive(Clone)]
pub struct DomainSpec {
    pub name: String,
    pub field: MetricField,
    phi: ScalarFn,
    dphi: VectorFn,
    ddphi: MatrixFn,
    pub delta0: Option<f64>,
    pub k0: Option<f64>,
    /// Star center used by the radial normalization of the chord generator.
    pub center: Vec<f64>,
    /// Region that random boundary and shell samples are drawn from.
    pub sampling: ChartDomain,
    /// Upper end of the δ search in the concavity check.
    pub delta_search_max: f64,
    pub grad_floor: f64,
}

impl std::fmt::Debug for DomainSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DomainSpec")
            .field("name", &self.name)
            .field("field", &self.field)
            .field("delta0", &self.delta0)
            .field("k0", &self.k0)
            .finish()
    }
}

impl DomainSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        field: MetricField,
        phi: ScalarFn,
        dphi: VectorFn,
        ddphi: MatrixFn,
        center: Vec<f64>,
        sampling: ChartDomain,
        delta_search_max: f64,
    ) -> Self {
        DomainSpec {
            name: name.into(),
            field,
            phi,
            dphi,
            ddphi,
            delta0: None,
            k0: None,
            center,
            sampling,
            delta_search_max,
            grad_floor: 1e-8,
        }
    }

    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    #[inline]
    pub fn phi(&self, q: &[f64]) -> f64 {
        (self.phi)(q)
    }

    /// Chart differential dφ.
    #[inline]
    pub fn dphi(&self, q: &[f64]) -> Vec<f64> {
        (self.dphi)(q)
    }

    /// Chart second partials ∂²φ.
    pub fn ddphi(&self, q: &[f64]) -> DMatrix<f64> {
        (self.ddphi)(q)
    }

    /// ∇φ = g⁻¹ dφ.
    pub fn grad_phi(&self, q: &[f64]) -> Vec<f64> {
        self.field.raise(q, &self.dphi(q))
    }

    pub fn grad_norm(&self, q: &[f64]) -> f64 {
        let d = self.dphi(q);
        crate::geometry::dot(&d, &self.field.raise(q, &d)).max(0.0).sqrt()
    }

    /// ∇φ / ‖∇φ‖², the generator of η⁺.
    pub fn eta_field(&self, q: &[f64]) -> Vec<f64> {
        let d = self.dphi(q);
        let up = self.field.raise(q, &d);
        let s = crate::geometry::dot(&d, &up);
        up.into_iter().map(|x| x / s).collect()
    }

    /// Covariant Hessian H^φ as a matrix in chart coordinates.
    pub fn hess_matrix(&self, q: &[f64]) -> DMatrix<f64> {
        let n = self.dim();
        let mut h = self.ddphi(q);
        if !self.field.is_euclidean() {
            let d = self.dphi(q);
            let gamma = self.field.christoffel_at(q).unwrap_or_else(|_| self.field.christoffel_finite_difference(q));
            for i in 0..n {
                for j in 0..n {
                    let mut s = 0.0;
                    for (k, dk) in d.iter().enumerate() {
                        s += gamma.get(k, i, j) * dk;
                    }
                    h[(i, j)] -= s;
                }
            }
        }
        (&h + h.transpose()) * 0.5
    }

    pub fn hess_form(&self, q: &[f64], u: &[f64], v: &[f64]) -> f64 {
        let h = self.hess_matrix(q);
        let mut s = 0.0;
        for i in 0..u.len() {
            for j in 0..v.len() {
                s += h[(i, j)] * u[i] * v[j];
            }
        }
        s
    }

    /// The same domain with φ replaced by `c·φ` (c > 0). δ₀ and K₀ are cleared.
    pub fn scaled(&self, c: f64) -> DomainSpec {
        let (p, d, dd) = (self.phi.clone(), self.dphi.clone(), self.ddphi.clone());
        let mut out = self.clone();
        out.phi = Arc::new(move |q| c * p(q));
        out.dphi = Arc::new(move |q| d(q).into_iter().map(|x| c * x).collect());
        out.ddphi = Arc::new(move |q| dd(q) * c);
        out.delta_search_max *= c;
        out.delta0 = None;
        out.k0 = None;
        out
    }

    pub fn with_delta0(mut self, d: f64) -> Self {
        self.delta0 = Some(d);
        self
    }

    pub fn with_k0(mut self, k: f64) -> Self {
        self.k0 = Some(k);
        self
    }

    /// δ₀ when known, otherwise the search ceiling.
    pub fn shell(&self) -> f64 {
        self.delta0.unwrap_or(self.delta_search_max)
    }
}

/// −H^φ(v, v) at a boundary point for a boundary tangent `v`.
pub fn second_fundamental_form(spec: &DomainSpec, x: &[f64], v: &[f64]) -> Result<f64> {
    let phi = spec.phi(x);
    if phi.abs() >= BOUNDARY_TOL {
        return Err(OgcError::NotOnBoundary { phi });
    }
    let nv = norm(v);
    if nv == 0.0 {
        return Ok(0.0);
    }
    let defect = crate::geometry::dot(&spec.dphi(x), v) / (nv * spec.grad_norm(x).max(1e-300));
    if defect.abs() >= 1e-6 {
        return Err(OgcError::NotTangent { defect });
    }
    Ok(-spec.hess_form(x, v, v))
}

/// Geodesic curvature of the boundary along `v`, signed so that a boundary
/// curving toward the inward side is positive: H^φ(v,v) / (g(v,v) ‖∇φ‖).
pub fn boundary_curvature(spec: &DomainSpec, x: &[f64], v: &[f64]) -> Result<f64> {
    let ii = second_fundamental_form(spec, x, v)?;
    let vv = spec.field.quad(x, v);
    if vv == 0.0 {
        return Ok(0.0);
    }
    Ok(-ii / (vv * spec.grad_norm(x)))
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ConcavityWitness {
    pub point: Vec<f64>,
    pub tangent: Vec<f64>,
    pub phi: f64,
    pub hess_value: f64,
    pub grad_norm: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ConcavityReport {
    pub is_strongly_concave: bool,
    pub delta0: f64,
    pub verified_delta: f64,
    pub boundary_samples: usize,
    pub witnesses: Vec<ConcavityWitness>,
}

#[derive(Debug, Clone)]
pub struct ConcavityOptions {
    pub seed: u64,
    pub bisection_steps: usize,
    pub safety: f64,
    pub max_witnesses: usize,
}

impl Default for ConcavityOptions {
    fn default() -> Self {
        ConcavityOptions { seed: 0, bisection_steps: 20, safety: 0.9, max_witnesses: 5 }
    }
}

/// Random boundary points, Newton-projected from uniform samples of the sampling region.
pub fn sample_boundary<R: Rng + ?Sized>(spec: &DomainSpec, count: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count && attempts < 50 * count.max(1) {
        attempts += 1;
        let mut x = spec.sampling.sample(rng);
        let mut ok = false;
        for _ in 0..60 {
            if !spec.field.is_valid_point(&x) {
                break;
            }
            let p = spec.phi(&x);
            if p.abs() < 1e-13 {
                ok = true;
                break;
            }
            let d = spec.dphi(&x);
            let dd = crate::geometry::dot(&d, &d);
            if dd < 1e-24 {
                break;
            }
            for (xi, di) in x.iter_mut().zip(&d) {
                *xi -= p * di / dd;
            }
        }
        if ok && spec.field.is_valid_point(&x) && spec.grad_norm(&x) > spec.grad_floor {
            out.push(x);
        }
    }
    out
}

/// Uniform samples of the sampling region with φ ≤ `level` and a valid metric.
pub fn sample_sublevel<R: Rng + ?Sized>(spec: &DomainSpec, level: f64, count: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count && attempts < 200 * count.max(1) {
        attempts += 1;
        let x = spec.sampling.sample(rng);
        if spec.field.is_valid_point(&x) && spec.phi(&x) <= level {
            out.push(x);
        }
    }
    out
}

/// Tests concavity and the gradient floor at one point.
fn concavity_witness(spec: &DomainSpec, p: &[f64], delta: f64, rng: &mut ChaCha8Rng) -> Option<ConcavityWitness> {
    let gn = spec.grad_norm(p);
    let phi = spec.phi(p);
    let n = spec.dim();
    if !(gn > spec.grad_floor) {
        return Some(ConcavityWitness { point: p.to_vec(), tangent: vec![0.0; n], phi, hess_value: f64::NAN, grad_norm: gn, delta });
    }
    let basis = g_orthonormal_complement(&spec.field, p, &spec.grad_phi(p), rng);
    let h = spec.hess_matrix(p);
    let m = basis.len();
    let mut b = DMatrix::zeros(m, m);
    for a in 0..m {
        for c in 0..m {
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    s += h[(i, j)] * basis[a][i] * basis[c][j];
                }
            }
            b[(a, c)] = s;
        }
    }
    let eig = SymmetricEigen::new(b);
    let (idx, top) = eig.eigenvalues.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (i, &l)| if l > acc.1 { (i, l) } else { acc });
    if top >= -1e-12 {
        let mut t = vec![0.0; n];
        for a in 0..m {
            for (ti, bi) in t.iter_mut().zip(&basis[a]) {
                *ti += eig.eigenvectors[(a, idx)] * bi;
            }
        }
        return Some(ConcavityWitness { point: p.to_vec(), tangent: t, phi, hess_value: top, grad_norm: gn, delta });
    }
    None
}

pub fn check_strong_concavity(spec: &DomainSpec, samples: usize) -> ConcavityReport {
    check_strong_concavity_with(spec, samples, &ConcavityOptions::default())
}

/// Sampled strong-concavity test with a bisection on the shell depth.
pub fn check_strong_concavity_with(spec: &DomainSpec, samples: usize, opts: &ConcavityOptions) -> ConcavityReport {
    let samples = samples.max(100);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let boundary = sample_boundary(spec, samples, &mut rng);
    let fail = |witnesses: Vec<ConcavityWitness>, count: usize| ConcavityReport {
        is_strongly_concave: false,
        delta0: 0.0,
        verified_delta: 0.0,
        boundary_samples: count,
        witnesses,
    };
    if boundary.is_empty() {
        return fail(Vec::new(), 0);
    }
    let witnesses: Vec<ConcavityWitness> =
        boundary.iter().filter_map(|b| concavity_witness(spec, b, 0.0, &mut rng)).take(opts.max_witnesses).collect();
    if !witnesses.is_empty() {
        return fail(witnesses, boundary.len());
    }
    let offsets: Vec<f64> = boundary.iter().map(|_| 2.0 * rng.gen::<f64>() - 1.0).collect();
    let mut last_failure = None;
    let mut passes = |delta: f64, rng: &mut ChaCha8Rng| -> bool {
        for (b, u) in boundary.iter().zip(&offsets) {
            let w = match eta(spec, b, delta * u, delta + 1e-9) {
                Ok(p) => concavity_witness(spec, &p, delta, rng),
                Err(_) => Some(ConcavityWitness {
                    point: b.clone(),
                    tangent: vec![0.0; spec.dim()],
                    phi: spec.phi(b),
                    hess_value: f64::NAN,
                    grad_norm: f64::NAN,
                    delta,
                }),
            };
            if let Some(w) = w {
                last_failure = Some(w);
                return false;
            }
        }
        true
    };
    let dmax = spec.delta_search_max;
    let verified = if passes(dmax, &mut rng) {
        dmax
    } else {
        let (mut lo, mut hi) = (0.0, dmax);
        for _ in 0..opts.bisection_steps {
            let mid = 0.5 * (lo + hi);
            if passes(mid, &mut rng) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    ConcavityReport {
        is_strongly_concave: verified > 0.0,
        delta0: opts.safety * verified,
        verified_delta: verified,
        boundary_samples: boundary.len(),
        witnesses: last_failure.into_iter().collect(),
    }
}

/// Sampled sup of ‖∇φ‖ over {φ ≤ δ₀}, inflated by 5%.
pub fn compute_k0(spec: &DomainSpec, samples: usize, seed: u64) -> Result<f64> {
    let delta0 = spec.delta0.ok_or_else(|| OgcError::PreconditionUnmet("delta0 must be set before K0".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = sample_sublevel(spec, delta0, samples.max(1), &mut rng);
    if pts.is_empty() {
        return Err(OgcError::DegenerateRegion("no samples with phi <= delta0".into()));
    }
    let sup = pts.iter().map(|p| spec.grad_norm(p)).fold(0.0, f64::max);
    Ok(1.05 * sup)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowDirection {
    Plus,
    Minus,
}

/// Integrates η' = ±∇φ/‖∇φ‖² for time τ, staying inside |φ| ≤ δ₀.
pub fn flow_eta(spec: &DomainSpec, x: &[f64], tau: f64, direction: FlowDirection) -> Result<Vec<f64>> {
    let s = match direction {
        FlowDirection::Plus => tau,
        FlowDirection::Minus => -tau,
    };
    eta(spec, x, s, spec.shell())
}

/// Signed-time η⁺ flow confined to |φ| ≤ `shell`.
pub(crate) fn eta(spec: &DomainSpec, x: &[f64], tau: f64, shell: f64) -> Result<Vec<f64>> {
    if tau == 0.0 {
        return Ok(x.to_vec());
    }
    let inside = |q: &[f64]| spec.field.is_valid_point(q) && spec.phi(q).abs() <= shell + 1e-9 && spec.grad_norm(q) > spec.grad_floor;
    if !inside(x) {
        return Err(OgcError::LeftShell { tau: 0.0 });
    }
    let steps = (tau.abs() / 0.005).ceil().max(1.0) as usize;
    let h = tau / steps as f64;
    let n = x.len();
    let mut q = x.to_vec();
    for k in 0..steps {
        let k1 = spec.eta_field(&q);
        let p2: Vec<f64> = (0..n).map(|i| q[i] + 0.5 * h * k1[i]).collect();
        if !spec.field.is_valid_point(&p2) {
            return Err(OgcError::LeftShell { tau: k as f64 * h });
        }
        let k2 = spec.eta_field(&p2);
        let p3: Vec<f64> = (0..n).map(|i| q[i] + 0.5 * h * k2[i]).collect();
        if !spec.field.is_valid_point(&p3) {
            return Err(OgcError::LeftShell { tau: k as f64 * h });
        }
        let k3 = spec.eta_field(&p3);
        let p4: Vec<f64> = (0..n).map(|i| q[i] + h * k3[i]).collect();
        if !spec.field.is_valid_point(&p4) {
            return Err(OgcError::LeftShell { tau: k as f64 * h });
        }
        let k4 = spec.eta_field(&p4);
        for i in 0..n {
            q[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if !inside(&q) {
            return Err(OgcError::LeftShell { tau: (k + 1) as f64 * h });
        }
    }
    Ok(q)
}

/// π(x) = η⁺(−φ(x), x), polished by Newton steps along the same field.
pub fn project_to_boundary(spec: &DomainSpec, x: &[f64]) -> Result<Vec<f64>> {
    let phi = spec.phi(x);
    let shell = spec.shell();
    if !(phi >= -shell - 1e-12 && phi <= shell) {
        return Err(OgcError::OutOfShell { phi });
    }
    if phi.abs() < 1e-14 {
        return Ok(x.to_vec());
    }
    let mut y = eta(spec, x, -phi, shell.max(phi.abs()))?;
    for _ in 0..8 {
        let p = spec.phi(&y);
        if p.abs() < 1e-13 {
            break;
        }
        let e = spec.eta_field(&y);
        for (yi, ei) in y.iter_mut().zip(&e) {
            *yi -= p * ei;
        }
    }
    Ok(y)
}
