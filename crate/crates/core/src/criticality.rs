//! Criticality diagnostics for curve portions: the cone-projected residual,
//! OGC/WOGC checks, cusp angles, δ-intervals, bending and proximity, and the
//! regular / first-type / second-type classification.

use serde::{Deserialize, Serialize};

use crate::domain::{project_to_boundary, DomainSpec};
use crate::error::{OgcError, Result};
use crate::geometry::{dist, MetricField};
use crate::pathspace::{cells, DiscreteCurve, IntervalKind, IntervalRecord};
use crate::variation::{analyze_interval, Chain};

/// φ band treated as boundary contact.
pub const CONTACT_TOL: f64 = 1e-7;
pub const CRITICAL_THRESHOLD: f64 = 1e-5;
pub const ANGLE_TOL: f64 = 1e-3;

/// H¹-dual norm of the negative energy gradient projected onto the outward cone.
pub fn residual_vplus(x: &DiscreteCurve, spec: &DomainSpec, a: f64, b: f64) -> Result<f64> {
    Ok(analyze_interval(x, spec, a, b, CONTACT_TOL)?.3.norm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OgcCheck {
    pub ok: bool,
    pub geodesic_residual: f64,
    pub orthogonality_defect: f64,
    pub is_wogc: bool,
}

/// Fraction of `u` tangent to the level set of φ through q, in the g-norm.
fn tangential_fraction(field: &MetricField, spec: &DomainSpec, q: &[f64], u: &[f64]) -> f64 {
    let nu = spec.grad_phi(q);
    let c = field.inner(q, u, &nu) / field.quad(q, &nu);
    let t: Vec<f64> = u.iter().zip(&nu).map(|(a, b)| a - c * b).collect();
    let un = field.norm_at(q, u);
    if un == 0.0 {
        return 0.0;
    }
    field.norm_at(q, &t) / un
}

/// Endpoint velocities recovered from the discrete momenta at both ends.
pub fn endpoint_velocities(chain: &Chain, field: &MetricField, grad: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let dim = chain.dim;
    let m = chain.len() - 1;
    let ga: Vec<f64> = grad[..dim].iter().map(|v| -v).collect();
    let gb = &grad[m * dim..];
    (field.raise(chain.node(0), &ga), field.raise(chain.node(m), gb))
}

/// Geodesic and orthogonality defects of x on [a, b].
pub fn is_ogc(x: &DiscreteCurve, spec: &DomainSpec, a: f64, b: f64) -> Result<OgcCheck> {
    if !(a < b) || a < -1e-12 || b > 1.0 + 1e-12 {
        return Err(OgcError::BadInterval(format!("[{a}, {b}]")));
    }
    let chain = Chain::from_interval(x, a, b);
    if chain.is_constant(1e-12) {
        return Err(OgcError::BadInterval("x is constant on the interval".into()));
    }
    Ok(check_chain(&chain, spec))
}

pub(crate) fn check_chain(chain: &Chain, spec: &DomainSpec) -> OgcCheck {
    let field = &spec.field;
    let dim = chain.dim;
    let grad = chain.gradient(field);
    let m = chain.len() - 1;
    let mut geo: f64 = 0.0;
    for j in 1..m {
        let hbar = 0.5 * (chain.h(j - 1) + chain.h(j));
        let q = chain.node(j);
        let acc = field.raise(q, &grad[j * dim..(j + 1) * dim]);
        geo = geo.max(field.norm_at(q, &acc) / hbar);
    }
    let (ua, ub) = endpoint_velocities(chain, field, &grad);
    let defect = tangential_fraction(field, spec, chain.node(0), &ua).max(tangential_fraction(field, spec, chain.node(m), &ub));
    let is_wogc = (1..m).any(|j| spec.phi(chain.node(j)) >= -CONTACT_TOL);
    OgcCheck { ok: geo < 1e-6 && defect < 1e-4, geodesic_residual: geo, orthogonality_defect: defect, is_wogc }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cusp {
    pub t1: f64,
    pub t2: f64,
    pub theta: f64,
    /// g-norm mismatch of the tangential velocity components across the cusp,
    /// relative to the larger speed.
    pub tangential_defect: f64,
}

fn g_angle(field: &MetricField, q: &[f64], u: &[f64], v: &[f64]) -> f64 {
    let c = field.inner(q, u, v) / (field.norm_at(q, u) * field.norm_at(q, v));
    c.clamp(-1.0, 1.0).acos()
}

fn cell_left_of(n: usize, t: f64) -> usize {
    let k = (t * n as f64 - 1e-9).ceil() as isize - 1;
    k.clamp(0, n as isize - 1) as usize
}

fn cell_right_of(n: usize, t: f64) -> usize {
    let k = (t * n as f64 + 1e-9).floor() as isize;
    k.clamp(0, n as isize - 1) as usize
}

/// Angle between ẋ(t1⁻) and ẋ(t2⁺) across a constant contact run.
pub fn cusp_angle(x: &DiscreteCurve, spec: &DomainSpec, t1: f64, t2: f64) -> Result<Cusp> {
    let n = x.n();
    if !(t1 <= t2) || t1 <= 0.0 || t2 >= 1.0 {
        return Err(OgcError::NotACusp);
    }
    let p = x.eval(t1);
    if spec.phi(&p).abs() > 1e-6 || dist(&p, &x.eval(t2)) > 1e-9 {
        return Err(OgcError::NotACusp);
    }
    let (l, r) = (cell_left_of(n, t1), cell_right_of(n, t2));
    let (um, up) = (x.velocity(l), x.velocity(r));
    let field = &spec.field;
    if field.norm_at(&p, &um) == 0.0 || field.norm_at(&p, &up) == 0.0 {
        return Err(OgcError::NotACusp);
    }
    let theta = g_angle(field, &p, &um, &up);
    if theta < ANGLE_TOL {
        return Err(OgcError::NotACusp);
    }
    let nu = spec.grad_phi(&p);
    let tang = |u: &[f64]| -> Vec<f64> {
        let c = field.inner(&p, u, &nu) / field.quad(&p, &nu);
        u.iter().zip(&nu).map(|(a, b)| a - c * b).collect()
    };
    let d: Vec<f64> = tang(&um).iter().zip(tang(&up)).map(|(a, b)| a - b).collect();
    let scale = field.norm_at(&p, &um).max(field.norm_at(&p, &up));
    Ok(Cusp { t1, t2, theta, tangential_defect: field.norm_at(&p, &d) / scale })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    NearRegularOgc,
    IrregularFirstType,
    IrregularSecondType,
    NotCritical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bending {
    pub alpha: f64,
    pub beta: f64,
    pub bending: f64,
    pub proximity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalityReport {
    pub interval: IntervalRecord,
    pub residual_vplus: f64,
    pub classification: Classification,
    pub cusps: Vec<Cusp>,
    pub ell_minus: f64,
    pub ell_plus: f64,
    pub bending: Vec<Bending>,
}

#[derive(Debug, Clone)]
pub struct ClassifyOptions {
    pub threshold: f64,
    pub angle_tol: f64,
    pub d0: f64,
    pub contact_tol: f64,
    pub constant_tol: f64,
    /// When set, bending diagnostics are attached for δ̄-close runs.
    pub proximity: Option<ProximityParams>,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            threshold: CRITICAL_THRESHOLD,
            angle_tol: ANGLE_TOL,
            d0: 0.01,
            contact_tol: CONTACT_TOL,
            constant_tol: 1e-9,
            proximity: None,
        }
    }
}

/// Lengths of the constant initial and final runs of x on [a, b].
pub fn constant_tails(x: &DiscreteCurve, a: f64, b: f64, tol: f64) -> (f64, f64) {
    let chain = Chain::from_interval(x, a, b);
    let m = chain.len() - 1;
    let mut j = 0;
    while j < m && dist(chain.node(j + 1), chain.node(0)) <= tol {
        j += 1;
    }
    let lm = chain.t[j] - a;
    let mut k = m;
    while k > 0 && dist(chain.node(k - 1), chain.node(m)) <= tol {
        k -= 1;
    }
    let lp = b - chain.t[k];
    if j == m {
        return (b - a, 0.0);
    }
    (lm, lp)
}

pub fn classify_portion(x: &DiscreteCurve, spec: &DomainSpec, a: f64, b: f64) -> Result<CriticalityReport> {
    classify_portion_with(x, spec, a, b, &ClassifyOptions::default())
}

pub fn classify_portion_with(x: &DiscreteCurve, spec: &DomainSpec, a: f64, b: f64, opts: &ClassifyOptions) -> Result<CriticalityReport> {
    let (chain, _, _, proj) = analyze_interval(x, spec, a, b, opts.contact_tol)?;
    let residual = proj.norm;
    if residual > opts.threshold {
        return Err(OgcError::NotCritical { residual, threshold: opts.threshold });
    }
    let m = chain.len() - 1;
    let contact: Vec<bool> = (0..=m).map(|j| spec.phi(chain.node(j)).abs() <= opts.contact_tol).collect();
    let mut cusps = Vec::new();
    let mut j = 1;
    while j < m {
        if !contact[j] {
            j += 1;
            continue;
        }
        let j1 = j;
        while j + 1 < m && contact[j + 1] && dist(chain.node(j + 1), chain.node(j1)) <= opts.constant_tol {
            j += 1;
        }
        let j2 = j;
        j += 1;
        let p = chain.node(j1);
        let um: Vec<f64> = p.iter().zip(chain.node(j1 - 1)).map(|(u, v)| (u - v) / chain.h(j1 - 1)).collect();
        let up: Vec<f64> = chain.node(j2 + 1).iter().zip(p).map(|(u, v)| (u - v) / chain.h(j2)).collect();
        if spec.field.norm_at(p, &um) == 0.0 || spec.field.norm_at(p, &up) == 0.0 {
            continue;
        }
        let theta = g_angle(&spec.field, p, &um, &up);
        if theta >= opts.angle_tol {
            if let Ok(c) = cusp_angle(x, spec, chain.t[j1], chain.t[j2]) {
                cusps.push(c);
            } else {
                cusps.push(Cusp { t1: chain.t[j1], t2: chain.t[j2], theta, tangential_defect: f64::NAN });
            }
        }
    }
    let (ell_minus, ell_plus) = constant_tails(x, a, b, opts.constant_tol);
    let max_theta = cusps.iter().map(|c| c.theta).fold(0.0, f64::max);
    let classification = if max_theta >= opts.d0 {
        Classification::IrregularFirstType
    } else if ell_minus + ell_plus > 0.0 {
        Classification::IrregularSecondType
    } else {
        Classification::NearRegularOgc
    };
    let bending = match &opts.proximity {
        Some(p) => close_runs(x, spec, a, b, p.delta_bar)
            .into_iter()
            .filter_map(|(al, be)| {
                bending_and_proximity(x, spec, al, be, p.delta_bar).ok().map(|(bb, pp)| Bending {
                    alpha: al,
                    beta: be,
                    bending: bb,
                    proximity: pp,
                })
            })
            .collect(),
        None => Vec::new(),
    };
    Ok(CriticalityReport {
        interval: IntervalRecord { a, b, kind: IntervalKind::Maximal, a_on_boundary: true, b_on_boundary: true, run: (0, 0) },
        residual_vplus: residual,
        classification,
        cusps,
        ell_minus,
        ell_plus,
        bending,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaInterval {
    pub alpha: f64,
    pub beta: f64,
    pub minimal: bool,
}

/// Grid intervals [α, β] with φ(x(α)) = φ(x(β)) = −d, φ ≥ −δ between, and
/// min φ = −δ, all within `tol`.
pub fn delta_intervals(x: &DiscreteCurve, spec: &DomainSpec, delta: f64, d_small: f64) -> Result<Vec<DeltaInterval>> {
    delta_intervals_tol(x, spec, delta, d_small, 1e-7)
}

pub fn delta_intervals_tol(x: &DiscreteCurve, spec: &DomainSpec, delta: f64, d_small: f64, tol: f64) -> Result<Vec<DeltaInterval>> {
    let delta0 = spec.delta0.unwrap_or(f64::INFINITY);
    if !(delta > 0.0 && delta <= delta0 && d_small >= 0.0 && d_small < delta) {
        return Err(OgcError::BadDepths { delta, d: d_small });
    }
    let phis: Vec<f64> = x.nodes().map(|p| spec.phi(p)).collect();
    let level: Vec<usize> = (0..phis.len()).filter(|&i| (phis[i] + d_small).abs() <= tol).collect();
    let mut found: Vec<(usize, usize)> = Vec::new();
    for (pi, &p) in level.iter().enumerate() {
        let mut lo = f64::INFINITY;
        let mut last = p;
        for &q in &level[pi + 1..] {
            for &v in &phis[last..=q] {
                lo = lo.min(v);
            }
            last = q;
            if lo < -delta - tol {
                break;
            }
            if lo <= -delta + tol {
                found.push((p, q));
            }
        }
    }
    let contains = |outer: (usize, usize), inner: (usize, usize)| outer != inner && outer.0 <= inner.0 && inner.1 <= outer.1;
    Ok(found
        .iter()
        .map(|&iv| DeltaInterval { alpha: x.param(iv.0), beta: x.param(iv.1), minimal: !found.iter().any(|&other| contains(iv, other)) })
        .collect())
}

/// Directional derivative of the energy on [α, β] along the outward bump
/// V = (−φ∘x − d)₊ ∇φ.
pub fn bump_descent_value(x: &DiscreteCurve, spec: &DomainSpec, alpha: f64, beta: f64, d_small: f64) -> f64 {
    let chain = Chain::from_interval(x, alpha, beta);
    let grad = chain.gradient(&spec.field);
    let dim = chain.dim;
    (0..chain.len())
        .map(|j| {
            let q = chain.node(j);
            let w = (-spec.phi(q) - d_small).max(0.0);
            let nu = spec.grad_phi(q);
            w * nu.iter().zip(&grad[j * dim..(j + 1) * dim]).map(|(a, b)| a * b).sum::<f64>()
        })
        .sum()
}

fn points_on(x: &DiscreteCurve, alpha: f64, beta: f64) -> Vec<Vec<f64>> {
    let mut pts = vec![x.eval(alpha)];
    for (k, _, _) in cells(x.n(), alpha, beta) {
        for i in [k, k + 1] {
            let s = x.param(i);
            if s > alpha && s < beta {
                pts.push(x.node(i).to_vec());
            }
        }
    }
    pts.push(x.eval(beta));
    pts
}

/// Bending constant 𝔟 (chart-Euclidean) and maximal proximity 𝔭 on [α, β].
pub fn bending_and_proximity(x: &DiscreteCurve, spec: &DomainSpec, alpha: f64, beta: f64, delta_bar: f64) -> Result<(f64, f64)> {
    let pts = points_on(x, alpha, beta);
    let phis: Vec<f64> = pts.iter().map(|p| spec.phi(p)).collect();
    if phis.iter().any(|&p| p < -delta_bar - 1e-9) || !(alpha < beta) {
        return Err(OgcError::NotDeltaBarClose { alpha, beta });
    }
    let prox = phis.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (xa, xb) = (x.eval(alpha), x.eval(beta));
    if dist(&xa, &xb) == 0.0 {
        return Ok((f64::INFINITY, prox));
    }
    let pa = project_to_boundary(spec, &xa)?;
    let pb = project_to_boundary(spec, &xb)?;
    let den = dist(&pa, &pb);
    if den == 0.0 {
        return Ok((f64::INFINITY, prox));
    }
    Ok((dist(&xb, &pa).max(dist(&xa, &pb)) / den, prox))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProximityParams {
    pub delta_bar: f64,
    pub sigma1: f64,
    pub gamma_bar: f64,
}

/// Runs inside (a, b) where φ ≥ −δ̄, bounded on both sides by crossings of
/// the −δ̄ level (runs reaching a or b are excluded).
pub fn close_runs(x: &DiscreteCurve, spec: &DomainSpec, a: f64, b: f64, delta_bar: f64) -> Vec<(f64, f64)> {
    let chain = Chain::from_interval(x, a, b);
    let m = chain.len() - 1;
    let level = |q: &[f64]| spec.phi(q) + delta_bar;
    let crossing = |j: usize, rising: bool| -> f64 {
        let (p, q) = (chain.node(j), chain.node(j + 1));
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let y: Vec<f64> = p.iter().zip(q).map(|(u, v)| u + mid * (v - u)).collect();
            if (level(&y) >= 0.0) == rising {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        chain.t[j] + 0.5 * (lo + hi) * chain.h(j)
    };
    let close: Vec<bool> = (0..=m).map(|j| level(chain.node(j)) >= 0.0).collect();
    let mut out = Vec::new();
    let mut j = 0;
    while j <= m {
        if !close[j] {
            j += 1;
            continue;
        }
        let start = j;
        while j < m && close[j + 1] {
            j += 1;
        }
        let end = j;
        j += 1;
        if start == 0 || end == m {
            continue;
        }
        out.push((crossing(start - 1, true), crossing(end, false)));
    }
    out
}

/// Sub-intervals of maximal intervals that hug ∂Ω (𝔭 ≥ −σ₁) while bending
/// sharply (𝔟 ≥ 1 + 3γ̄/2).
pub fn find_nonessential_intervals(x: &DiscreteCurve, spec: &DomainSpec, params: &ProximityParams) -> Result<Vec<IntervalRecord>> {
    let mut out = Vec::new();
    for iv in crate::pathspace::maximal_intervals(x, spec)? {
        for (al, be) in close_runs(x, spec, iv.a, iv.b, params.delta_bar) {
            if let Ok((bend, prox)) = bending_and_proximity(x, spec, al, be, params.delta_bar) {
                if prox >= -params.sigma1 && bend >= 1.0 + 1.5 * params.gamma_bar {
                    out.push(IntervalRecord {
                        a: al,
                        b: be,
                        kind: IntervalKind::Sub,
                        a_on_boundary: false,
                        b_on_boundary: false,
                        run: iv.run,
                    });
                }
            }
        }
    }
    Ok(out)
}
