//! Chart metrics, Christoffel symbols, geodesics and shooting.
//!
//! Everything lives in a single chart. Conformal metrics `g = f(q) I` get an
//! analytic fast path; general metrics fall back to Richardson-extrapolated
//! central differences.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;

use crate::error::{OgcError, Result};

pub type MetricFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type ChristoffelFn = Arc<dyn Fn(&[f64]) -> Christoffel + Send + Sync>;

#[derive(Debug, Clone, PartialEq)]
pub enum ChartDomain {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl ChartDomain {
    pub fn dim(&self) -> usize {
        match self {
            ChartDomain::Box { lo, .. } => lo.len(),
            ChartDomain::Ball { center, .. } => center.len(),
        }
    }

    /// Distance to the chart edge; positive inside.
    pub fn margin(&self, q: &[f64]) -> f64 {
        match self {
            ChartDomain::Box { lo, hi } => lo.iter().zip(hi).zip(q).map(|((l, h), x)| (x - l).min(h - x)).fold(f64::INFINITY, f64::min),
            ChartDomain::Ball { center, radius } => radius - dist(q, center),
        }
    }

    pub fn contains(&self, q: &[f64]) -> bool {
        q.len() == self.dim() && q.iter().all(|x| x.is_finite()) && self.margin(q) > 0.0
    }

    /// Uniform sample.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            ChartDomain::Box { lo, hi } => lo.iter().zip(hi).map(|(l, h)| l + (h - l) * rng.gen::<f64>()).collect(),
            ChartDomain::Ball { center, radius } => loop {
                let p: Vec<f64> = (0..center.len()).map(|_| 2.0 * rng.gen::<f64>() - 1.0).collect();
                if norm(&p) < 1.0 {
                    break center.iter().zip(&p).map(|(c, x)| c + radius * x).collect();
                }
            },
        }
    }
}

/// Christoffel symbols of the second kind, stored as `data[(k * n + i) * n + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Christoffel {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Christoffel {
    pub fn zeros(dim: usize) -> Self {
        Christoffel { dim, data: vec![0.0; dim * dim * dim] }
    }

    #[inline]
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[(k * self.dim + i) * self.dim + j]
    }

    #[inline]
    fn set(&mut self, k: usize, i: usize, j: usize, v: f64) {
        let n = self.dim;
        self.data[(k * n + i) * n + j] = v;
    }

    /// Γ(u, v)^k = Γ^k_ij u^i v^j.
    pub fn contract(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        let n = self.dim;
        (0..n)
            .map(|k| {
                let mut s = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        s += self.get(k, i, j) * u[i] * v[j];
                    }
                }
                s
            })
            .collect()
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Conformal factor `f` of `g = f I` together with its chart gradient.
#[derive(Clone)]
pub struct ConformalFactor {
    pub f: ScalarFn,
    pub grad: VectorFn,
}

#[derive(Clone)]
enum Kind {
    Euclidean,
    Conformal(ConformalFactor),
    General(MetricFn),
}

#[derive(Clone)]
pub struct MetricField {
    dim: usize,
    chart: ChartDomain,
    kind: Kind,
    pub derivative_step: f64,
    analytic_christoffel: Option<ChristoffelFn>,
}

impl std::fmt::Debug for MetricField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self.kind {
            Kind::Euclidean => "euclidean",
            Kind::Conformal(_) => "conformal",
            Kind::General(_) => "general",
        };
        f.debug_struct("MetricField").field("dim", &self.dim).field("kind", &kind).field("chart", &self.chart).finish()
    }
}

impl MetricField {
    pub fn euclidean(chart: ChartDomain) -> Self {
        MetricField { dim: chart.dim(), chart, kind: Kind::Euclidean, derivative_step: 1e-5, analytic_christoffel: None }
    }

    pub fn conformal(chart: ChartDomain, factor: ConformalFactor) -> Self {
        MetricField { dim: chart.dim(), chart, kind: Kind::Conformal(factor), derivative_step: 1e-5, analytic_christoffel: None }
    }

    pub fn general(chart: ChartDomain, g: MetricFn) -> Self {
        MetricField { dim: chart.dim(), chart, kind: Kind::General(g), derivative_step: 1e-5, analytic_christoffel: None }
    }

    pub fn with_christoffel(mut self, gamma: ChristoffelFn) -> Self {
        self.analytic_christoffel = Some(gamma);
        self
    }

    pub fn with_derivative_step(mut self, h: f64) -> Self {
        self.derivative_step = h;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn chart(&self) -> &ChartDomain {
        &self.chart
    }

    pub fn is_euclidean(&self) -> bool {
        matches!(self.kind, Kind::Euclidean)
    }

    /// The conformal factor at `q`, if the metric is conformally flat.
    pub fn conformal_factor(&self, q: &[f64]) -> Option<f64> {
        match &self.kind {
            Kind::Euclidean => Some(1.0),
            Kind::Conformal(c) => Some((c.f)(q)),
            Kind::General(_) => None,
        }
    }

    /// Raw metric matrix, no chart or definiteness checks.
    pub fn g_raw(&self, q: &[f64]) -> DMatrix<f64> {
        match &self.kind {
            Kind::Euclidean => DMatrix::identity(self.dim, self.dim),
            Kind::Conformal(c) => DMatrix::identity(self.dim, self.dim) * (c.f)(q),
            Kind::General(g) => {
                let m = g(q);
                (&m + m.transpose()) * 0.5
            }
        }
    }

    pub fn metric_at(&self, q: &[f64]) -> Result<DMatrix<f64>> {
        if !self.chart.contains(q) {
            return Err(OgcError::OutOfChart(q.to_vec()));
        }
        let m = self.g_raw(q);
        let ok = match &self.kind {
            Kind::Euclidean => true,
            Kind::Conformal(_) => m[(0, 0)] > 0.0 && m[(0, 0)].is_finite(),
            Kind::General(_) => SymmetricEigen::new(m.clone()).eigenvalues.iter().all(|&l| l > 0.0),
        };
        if ok {
            Ok(m)
        } else {
            Err(OgcError::NotPositiveDefinite(q.to_vec()))
        }
    }

    /// Whether `q` is in the chart and the metric is positive definite there.
    pub fn is_valid_point(&self, q: &[f64]) -> bool {
        self.metric_at(q).is_ok()
    }

    /// Smallest and largest eigenvalue of `g(q)`.
    pub fn eigen_bounds(&self, q: &[f64]) -> (f64, f64) {
        match &self.kind {
            Kind::Euclidean => (1.0, 1.0),
            Kind::Conformal(c) => {
                let f = (c.f)(q);
                (f, f)
            }
            Kind::General(_) => {
                let e = SymmetricEigen::new(self.g_raw(q)).eigenvalues;
                (e.min(), e.max())
            }
        }
    }

    #[inline]
    pub fn inner(&self, q: &[f64], u: &[f64], v: &[f64]) -> f64 {
        match &self.kind {
            Kind::Euclidean => dot(u, v),
            Kind::Conformal(c) => (c.f)(q) * dot(u, v),
            Kind::General(_) => {
                let g = self.g_raw(q);
                let mut s = 0.0;
                for i in 0..self.dim {
                    for j in 0..self.dim {
                        s += g[(i, j)] * u[i] * v[j];
                    }
                }
                s
            }
        }
    }

    #[inline]
    pub fn quad(&self, q: &[f64], v: &[f64]) -> f64 {
        self.inner(q, v, v)
    }

    pub fn norm_at(&self, q: &[f64], v: &[f64]) -> f64 {
        self.quad(q, v).max(0.0).sqrt()
    }

    /// Index lowering: `g(q) v`.
    pub fn lower(&self, q: &[f64], v: &[f64]) -> Vec<f64> {
        match &self.kind {
            Kind::Euclidean => v.to_vec(),
            Kind::Conformal(c) => {
                let f = (c.f)(q);
                v.iter().map(|x| f * x).collect()
            }
            Kind::General(_) => (self.g_raw(q) * DVector::from_column_slice(v)).as_slice().to_vec(),
        }
    }

    /// Index raising: `g(q)^{-1} w`.
    pub fn raise(&self, q: &[f64], w: &[f64]) -> Vec<f64> {
        match &self.kind {
            Kind::Euclidean => w.to_vec(),
            Kind::Conformal(c) => {
                let f = (c.f)(q);
                w.iter().map(|x| x / f).collect()
            }
            Kind::General(_) => {
                let g = self.g_raw(q);
                let b = DVector::from_column_slice(w);
                match g.clone().cholesky() {
                    Some(ch) => ch.solve(&b).as_slice().to_vec(),
                    None => g.lu().solve(&b).map(|x| x.as_slice().to_vec()).unwrap_or_else(|| vec![f64::NAN; self.dim]),
                }
            }
        }
    }

    /// Chart gradient of `q ↦ g(q)(v, v)`.
    pub fn dquad(&self, q: &[f64], v: &[f64]) -> Vec<f64> {
        match &self.kind {
            Kind::Euclidean => vec![0.0; self.dim],
            Kind::Conformal(c) => {
                let s = dot(v, v);
                (c.grad)(q).into_iter().map(|x| x * s).collect()
            }
            Kind::General(_) => {
                let h = self.derivative_step;
                let mut out = vec![0.0; self.dim];
                let mut qp = q.to_vec();
                for (l, o) in out.iter_mut().enumerate() {
                    let d = |hh: f64, qp: &mut Vec<f64>| {
                        qp[l] = q[l] + hh;
                        let a = self.quad(qp, v);
                        qp[l] = q[l] - hh;
                        let b = self.quad(qp, v);
                        qp[l] = q[l];
                        (a - b) / (2.0 * hh)
                    };
                    let d1 = d(h, &mut qp);
                    let d2 = d(0.5 * h, &mut qp);
                    *o = (4.0 * d2 - d1) / 3.0;
                }
                out
            }
        }
    }

    pub fn christoffel_at(&self, q: &[f64]) -> Result<Christoffel> {
        if self.chart.margin(q) < self.derivative_step {
            return Err(OgcError::OutOfChart(q.to_vec()));
        }
        if let Some(gamma) = &self.analytic_christoffel {
            return Ok(gamma(q));
        }
        Ok(match &self.kind {
            Kind::Euclidean => Christoffel::zeros(self.dim),
            Kind::Conformal(c) => conformal_christoffel((c.f)(q), &(c.grad)(q)),
            Kind::General(_) => self.christoffel_finite_difference(q),
        })
    }

    /// Levi-Civita symbols from Richardson-extrapolated central differences of `g`,
    /// ignoring any analytic override.
    pub fn christoffel_finite_difference(&self, q: &[f64]) -> Christoffel {
        let n = self.dim;
        let h = self.derivative_step;
        // dg[l] = ∂_l g
        let mut dg = Vec::with_capacity(n);
        let mut qp = q.to_vec();
        for l in 0..n {
            let central = |hh: f64, qp: &mut Vec<f64>| {
                qp[l] = q[l] + hh;
                let a = self.g_raw(qp);
                qp[l] = q[l] - hh;
                let b = self.g_raw(qp);
                qp[l] = q[l];
                (a - b) / (2.0 * hh)
            };
            let d1 = central(h, &mut qp);
            let d2 = central(0.5 * h, &mut qp);
            dg.push((d2 * 4.0 - d1) / 3.0);
        }
        let ginv = self.g_raw(q).try_inverse().unwrap_or_else(|| DMatrix::from_element(n, n, f64::NAN));
        let mut out = Christoffel::zeros(n);
        for k in 0..n {
            for i in 0..n {
                for j in i..n {
                    let mut s = 0.0;
                    for l in 0..n {
                        s += ginv[(k, l)] * (dg[i][(l, j)] + dg[j][(l, i)] - dg[l][(i, j)]);
                    }
                    out.set(k, i, j, 0.5 * s);
                    out.set(k, j, i, 0.5 * s);
                }
            }
        }
        out
    }

    /// Γ(v, v), with the conformal shortcut when available.
    pub fn gamma_vv(&self, q: &[f64], v: &[f64]) -> Vec<f64> {
        if self.analytic_christoffel.is_none() {
            match &self.kind {
                Kind::Euclidean => return vec![0.0; self.dim],
                Kind::Conformal(c) => {
                    let f = (c.f)(q);
                    let df = (c.grad)(q);
                    let dv = dot(&df, v);
                    let vv = dot(v, v);
                    return v.iter().zip(&df).map(|(vi, dfi)| (2.0 * vi * dv - vv * dfi) / (2.0 * f)).collect();
                }
                Kind::General(_) => {}
            }
        }
        match self.christoffel_at(q) {
            Ok(c) => c.contract(v, v),
            Err(_) => self.christoffel_finite_difference(q).contract(v, v),
        }
    }
}

/// Γ^k_ij = (δ_ki ∂_j f + δ_kj ∂_i f − δ_ij ∂_k f) / (2f).
fn conformal_christoffel(f: f64, df: &[f64]) -> Christoffel {
    let n = df.len();
    let mut c = Christoffel::zeros(n);
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                if k == i {
                    s += df[j];
                }
                if k == j {
                    s += df[i];
                }
                if i == j {
                    s -= df[k];
                }
                c.set(k, i, j, s / (2.0 * f));
            }
        }
    }
    c
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicTrajectory {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
}

impl GeodesicTrajectory {
    pub fn endpoint(&self) -> &[f64] {
        self.points.last().expect("trajectory has at least one point")
    }

    pub fn duration(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0) - self.times.first().copied().unwrap_or(0.0)
    }

    /// Riemannian length, using the conserved speed at the start.
    pub fn length(&self, field: &MetricField) -> f64 {
        field.norm_at(&self.points[0], &self.velocities[0]) * self.duration()
    }
}

/// One RK4 step of `q'' = −Γ(q', q')`.
fn rk4_step(field: &MetricField, q: &[f64], v: &[f64], h: f64) -> (Vec<f64>, Vec<f64>) {
    let n = q.len();
    let acc = |q: &[f64], v: &[f64]| -> Vec<f64> { field.gamma_vv(q, v).into_iter().map(|x| -x).collect() };
    let k1q = v.to_vec();
    let k1v = acc(q, v);
    let q2: Vec<f64> = (0..n).map(|i| q[i] + 0.5 * h * k1q[i]).collect();
    let v2: Vec<f64> = (0..n).map(|i| v[i] + 0.5 * h * k1v[i]).collect();
    let k2v = acc(&q2, &v2);
    let q3: Vec<f64> = (0..n).map(|i| q[i] + 0.5 * h * v2[i]).collect();
    let v3: Vec<f64> = (0..n).map(|i| v[i] + 0.5 * h * k2v[i]).collect();
    let k3v = acc(&q3, &v3);
    let q4: Vec<f64> = (0..n).map(|i| q[i] + h * v3[i]).collect();
    let v4: Vec<f64> = (0..n).map(|i| v[i] + h * k3v[i]).collect();
    let k4v = acc(&q4, &v4);
    let qn = (0..n).map(|i| q[i] + h / 6.0 * (k1q[i] + 2.0 * v2[i] + 2.0 * v3[i] + v4[i])).collect();
    let vn = (0..n).map(|i| v[i] + h / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i])).collect();
    (qn, vn)
}

/// Fixed-step RK4 over `[0, t]` with exactly `steps` steps.
pub fn integrate_geodesic_steps(field: &MetricField, q0: &[f64], v0: &[f64], t: f64, steps: usize) -> Result<GeodesicTrajectory> {
    if !field.is_valid_point(q0) {
        return Err(OgcError::OutOfChart(q0.to_vec()));
    }
    let steps = steps.max(1);
    let h = t / steps as f64;
    let mut traj = GeodesicTrajectory {
        times: Vec::with_capacity(steps + 1),
        points: Vec::with_capacity(steps + 1),
        velocities: Vec::with_capacity(steps + 1),
    };
    traj.times.push(0.0);
    traj.points.push(q0.to_vec());
    traj.velocities.push(v0.to_vec());
    let e0 = field.quad(q0, v0);
    let (mut q, mut v) = (q0.to_vec(), v0.to_vec());
    for k in 1..=steps {
        let (qn, vn) = rk4_step(field, &q, &v, h);
        if !field.is_valid_point(&qn) {
            return Err(OgcError::LeftChart { t: (k - 1) as f64 * h });
        }
        q = qn;
        v = vn;
        traj.times.push(k as f64 * h);
        traj.points.push(q.clone());
        traj.velocities.push(v.clone());
    }
    if e0 > 0.0 {
        let drift = (field.quad(&q, &v) - e0).abs() / e0;
        if drift > 1e-6 {
            return Err(OgcError::StepTooLarge { drift });
        }
    }
    Ok(traj)
}

pub fn integrate_geodesic(field: &MetricField, q0: &[f64], v0: &[f64], t: f64, step: f64) -> Result<GeodesicTrajectory> {
    if !(step > 0.0) || !(t >= 0.0) {
        return Err(OgcError::InvalidInput(format!("step {step} and duration {t} must be positive")));
    }
    let steps = (t / step).ceil().max(1.0) as usize;
    integrate_geodesic_steps(field, q0, v0, t, steps)
}

/// Length of the chart-straight segment; an upper bound on the distance.
pub fn straight_length(field: &MetricField, p: &[f64], q: &[f64]) -> f64 {
    let m = 32;
    let d: Vec<f64> = q.iter().zip(p).map(|(a, b)| a - b).collect();
    (0..m)
        .map(|k| {
            let t = (k as f64 + 0.5) / m as f64;
            let x: Vec<f64> = p.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            field.norm_at(&x, &d) / m as f64
        })
        .sum()
}

fn shoot_end(field: &MetricField, p: &[f64], v: &[f64], steps: usize) -> Option<Vec<f64>> {
    integrate_geodesic_steps(field, p, v, 1.0, steps).ok().map(|t| t.endpoint().to_vec())
}

/// Two-point geodesic by single shooting with `steps` RK4 steps on `[0, 1]`.
pub fn minimal_geodesic_steps(field: &MetricField, p: &[f64], q: &[f64], dist_bound: f64, steps: usize) -> Result<GeodesicTrajectory> {
    let n = field.dim();
    let est = straight_length(field, p, q);
    if est > dist_bound {
        return Err(OgcError::TooFarApart { dist: est, bound: dist_bound });
    }
    let mut v: Vec<f64> = q.iter().zip(p).map(|(a, b)| a - b).collect();
    if norm(&v) == 0.0 {
        return integrate_geodesic_steps(field, p, &v, 1.0, steps);
    }
    let residual = |v: &[f64]| -> Option<(Vec<f64>, f64)> {
        let end = shoot_end(field, p, v, steps)?;
        let r: Vec<f64> = end.iter().zip(q).map(|(a, b)| a - b).collect();
        let nr = norm(&r);
        Some((r, nr))
    };
    let (mut r, mut nr) = residual(&v).ok_or_else(|| OgcError::NoConvergence("initial shot left the chart".into()))?;
    let scale = 1.0 + norm(q).max(norm(p));
    for _ in 0..50 {
        if nr < 1e-11 * scale {
            return integrate_geodesic_steps(field, p, &v, 1.0, steps);
        }
        let mut jac = DMatrix::zeros(n, n);
        for j in 0..n {
            let eps = 1e-7 * (1.0 + norm(&v));
            let mut vp = v.clone();
            vp[j] += eps;
            let (rp, _) = residual(&vp).ok_or_else(|| OgcError::NoConvergence("jacobian probe left the chart".into()))?;
            for i in 0..n {
                jac[(i, j)] = (rp[i] - r[i]) / eps;
            }
        }
        let dv =
            jac.lu().solve(&DVector::from_column_slice(&r)).ok_or_else(|| OgcError::NoConvergence("singular shooting jacobian".into()))?;
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<f64> = v.iter().zip(dv.iter()).map(|(a, b)| a - alpha * b).collect();
            if let Some((rt, nt)) = residual(&trial) {
                if nt < nr {
                    v = trial;
                    r = rt;
                    nr = nt;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if nr < 1e-9 {
        integrate_geodesic_steps(field, p, &v, 1.0, steps)
    } else {
        Err(OgcError::NoConvergence(format!("shooting residual {nr:e}")))
    }
}

pub fn minimal_geodesic(field: &MetricField, p: &[f64], q: &[f64], dist_bound: f64) -> Result<GeodesicTrajectory> {
    let est = straight_length(field, p, q);
    let steps = ((est / 0.005).ceil() as usize).clamp(64, 4000);
    minimal_geodesic_steps(field, p, q, dist_bound, steps)
}

#[derive(Debug, Clone)]
pub struct InjectivityOptions {
    pub cap: f64,
    pub floor: f64,
    pub directions: usize,
    pub step: f64,
    pub max_points: usize,
    pub seed: u64,
}

impl Default for InjectivityOptions {
    fn default() -> Self {
        InjectivityOptions { cap: 10.0, floor: 1e-3, directions: 8, step: 0.01, max_points: 12, seed: 0 }
    }
}

/// Conservative injectivity-radius bound from the first conjugate time of
/// sampled geodesics, capped at `opts.cap`.
pub fn injectivity_radius_lower_bound(field: &MetricField, region: &[Vec<f64>], opts: &InjectivityOptions) -> Result<f64> {
    use rand::SeedableRng;
    if region.is_empty() {
        return Err(OgcError::DegenerateRegion("empty sample region".into()));
    }
    let n = field.dim();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(opts.seed);
    let stride = (region.len() / opts.max_points.max(1)).max(1);
    let mut best = opts.cap;
    for q in region.iter().step_by(stride).take(opts.max_points) {
        if !field.is_valid_point(q) {
            return Err(OgcError::DegenerateRegion(format!("sample {q:?} outside the chart")));
        }
        for d in 0..opts.directions {
            let raw: Vec<f64> = if n == 2 {
                let th = std::f64::consts::PI * d as f64 / opts.directions as f64;
                vec![th.cos(), th.sin()]
            } else {
                (0..n).map(|_| rng.gen::<f64>() - 0.5).collect()
            };
            let v = scale(&raw, 1.0 / field.norm_at(q, &raw));
            let w = g_orthonormal_complement(field, q, &v, &mut rng);
            let Some(w) = w.first().cloned() else { continue };
            let t = conjugate_time(field, q, &v, &w, best, opts.step);
            best = best.min(t);
        }
    }
    if best < opts.floor {
        return Err(OgcError::DegenerateRegion(format!("injectivity bound {best:e} below floor")));
    }
    Ok(best)
}

fn conjugate_time(field: &MetricField, q: &[f64], v: &[f64], w: &[f64], t_max: f64, step: f64) -> f64 {
    let eps = 1e-6;
    let vp: Vec<f64> = v.iter().zip(w).map(|(a, b)| a + eps * b).collect();
    let vp = scale(&vp, field.norm_at(q, v) / field.norm_at(q, &vp));
    let steps = (t_max / step).ceil() as usize;
    let h = t_max / steps as f64;
    let (mut x, mut xv) = (q.to_vec(), v.to_vec());
    let (mut y, mut yv) = (q.to_vec(), vp);
    let mut peak: f64 = 0.0;
    for k in 1..=steps {
        let (a, b) = rk4_step(field, &x, &xv, h);
        let (c, d) = rk4_step(field, &y, &yv, h);
        if !field.is_valid_point(&a) || !field.is_valid_point(&c) {
            return t_max;
        }
        x = a;
        xv = b;
        y = c;
        yv = d;
        let j: Vec<f64> = y.iter().zip(&x).map(|(p, r)| (p - r) / eps).collect();
        let nj = field.norm_at(&x, &j);
        if nj > peak {
            peak = nj;
        } else if nj <= 0.05 * peak {
            return k as f64 * h;
        }
    }
    t_max
}

/// A g-orthonormal basis of the g-orthogonal complement of `v` at `q`.
pub fn g_orthonormal_complement<R: Rng + ?Sized>(field: &MetricField, q: &[f64], v: &[f64], rng: &mut R) -> Vec<Vec<f64>> {
    let n = field.dim();
    let vn = field.norm_at(q, v);
    let mut basis: Vec<Vec<f64>> = vec![scale(v, 1.0 / vn)];
    if n == 2 {
        // Rotating the lowered covector gives the complement directly.
        let lv = field.lower(q, v);
        let t = vec![-lv[1], lv[0]];
        let nt = field.norm_at(q, &t);
        return vec![scale(&t, 1.0 / nt)];
    }
    let mut attempts = 0;
    while basis.len() < n && attempts < 100 * n {
        attempts += 1;
        let mut u: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
        for b in &basis {
            let c = field.inner(q, &u, b);
            for (ui, bi) in u.iter_mut().zip(b) {
                *ui -= c * bi;
            }
        }
        let nu = field.norm_at(q, &u);
        if nu > 1e-6 {
            basis.push(scale(&u, 1.0 / nu));
        }
    }
    basis.remove(0);
    basis
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[inline]
pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}
