//! Deformations of a single curve: outward-pushing descent (type A),
//! reparameterization past constant tails (type B) and inward pushes that
//! clear boundary-hugging cusps (type C), plus the constants they use.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::criticality::{constant_tails, find_nonessential_intervals, ProximityParams, CONTACT_TOL};
use crate::domain::{compute_k0, eta, sample_sublevel, DomainSpec};
use crate::error::{OgcError, Result};
use crate::geometry::dot;
use crate::pathspace::{energy_unchecked, h1_norm, maximal_intervals, DiscreteCurve, IntervalRecord};
use crate::variation::{analyze_interval, Chain};

pub use crate::minimax::{first_deformation, DeformationOptions, DeformationOutcome};

/// Optional overrides of the ledger defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LedgerOverrides {
    pub delta_bar: Option<f64>,
    pub gamma_bar: Option<f64>,
    pub theta0: Option<f64>,
    pub rho0: Option<f64>,
    pub d0: Option<f64>,
    pub lambda: Option<f64>,
    pub mu_r: Option<f64>,
    pub t_eps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsLedger {
    pub delta0: f64,
    pub k0: f64,
    pub m0: f64,
    pub ell0: f64,
    pub l0: f64,
    pub gamma_max: f64,
    pub l1: f64,
    pub n0_hess: f64,
    pub lambda1: f64,
    pub lambda: f64,
    pub e_r: f64,
    pub theta_r: f64,
    pub mu_r: f64,
    pub kappa_r: f64,
    pub rho_r: f64,
    pub delta_bar: f64,
    pub gamma_bar: f64,
    pub sigma0: f64,
    pub sigma1: f64,
    pub theta0: f64,
    pub mu0: f64,
    pub rho0: f64,
    pub eps0: f64,
    pub d0: f64,
    pub t_eps: f64,
    pub c1_lower_bound: f64,
}

impl ConstantsLedger {
    /// Samples the working region {φ ≤ δ₀} for metric, Christoffel and
    /// Hessian bounds, then derives the flow constants.
    pub fn assemble(spec: &DomainSpec, m0: f64, seed: u64, ov: &LedgerOverrides) -> Result<ConstantsLedger> {
        let delta0 = spec.delta0.ok_or_else(|| OgcError::PreconditionUnmet("delta0 must be set before assembling constants".into()))?;
        let k0 = match spec.k0 {
            Some(k) => k,
            None => compute_k0(spec, 2000, seed)?,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let pts = sample_sublevel(spec, delta0, 400, &mut rng);
        if pts.is_empty() {
            return Err(OgcError::DegenerateRegion("no samples in the working region".into()));
        }
        let (mut ell0, mut l0, mut gmax, mut nh) = (f64::INFINITY, 0.0f64, 0.0f64, 0.0f64);
        for p in &pts {
            let (lo, hi) = spec.field.eigen_bounds(p);
            ell0 = ell0.min(lo);
            l0 = l0.max(hi);
            if let Ok(c) = spec.field.christoffel_at(p) {
                gmax = gmax.max(c.frobenius());
            }
            let h = spec.hess_matrix(p);
            nh = nh.max(h.symmetric_eigen().eigenvalues.amax());
        }
        let lambda1 = (ell0.sqrt() / (2.0 * k0)).min(ell0.sqrt() / (2.0 * k0 * k0 + 4.0 * m0 * nh * nh).sqrt());
        let lambda = ov.lambda.unwrap_or(0.5 * lambda1);
        let l1 = 2f64.sqrt() * (1.0 + gmax * (2.0 * m0 / ell0).sqrt());
        let mu_r = ov.mu_r.unwrap_or(0.1);
        let delta_bar = ov.delta_bar.unwrap_or(delta0 / 4.0);
        let gamma_bar = ov.gamma_bar.unwrap_or(0.1);
        let theta0 = ov.theta0.unwrap_or(0.5);
        let rho0 = ov.rho0.unwrap_or(delta_bar);
        let sigma0 = delta_bar / 8.0;
        let sigma1 = (sigma0 / 2.0).min(2.0 / 7.0 * rho0 * theta0);
        Ok(ConstantsLedger {
            delta0,
            k0,
            m0,
            ell0,
            l0,
            gamma_max: gmax,
            l1,
            n0_hess: nh,
            lambda1,
            lambda,
            e_r: mu_r * mu_r / (32.0 * l1 * l1 * l0),
            theta_r: 0.1,
            mu_r,
            kappa_r: delta0 / 8.0,
            rho_r: delta_bar,
            delta_bar,
            gamma_bar,
            sigma0,
            sigma1,
            theta0,
            mu0: mu_r,
            rho0,
            eps0: delta_bar / 4.0,
            d0: ov.d0.unwrap_or(0.01),
            t_eps: ov.t_eps.unwrap_or(1.0),
            c1_lower_bound: 0.5 * (3.0 * delta0 / (4.0 * k0)).powi(2),
        })
    }

    pub fn proximity(&self) -> ProximityParams {
        ProximityParams { delta_bar: self.delta_bar, sigma1: self.sigma1, gamma_bar: self.gamma_bar }
    }

    /// Lower bound on (b − a)·f_{a,b} for portions that reach depth 3δ₀/4.
    pub fn short_interval_bound(&self) -> f64 {
        0.25 * (3.0 * self.delta0 / (4.0 * self.k0)).powi(2)
    }

    /// Violated ledger invariants, empty when consistent.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.ell0 > 0.0 && self.ell0 <= self.l0) {
            v.push(format!("metric bounds out of order: ell0 = {}, L0 = {}", self.ell0, self.l0));
        }
        if self.sigma1 > 2.0 / 7.0 * self.rho0 * self.theta0 + 1e-15 {
            v.push("sigma1 exceeds (2/7) rho0 theta0".into());
        }
        if self.lambda > self.lambda1 + 1e-15 {
            v.push(format!("lambda = {} exceeds lambda1 = {}", self.lambda, self.lambda1));
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepKind {
    A,
    B,
    C,
}

impl std::fmt::Display for StepKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StepKind::A => "A",
            StepKind::B => "B",
            StepKind::C => "C",
        })
    }
}

#[derive(Debug, Clone)]
pub struct FlowStepResult {
    pub curve: DiscreteCurve,
    pub f_before: f64,
    pub f_after: f64,
    pub step_kind: StepKind,
    pub displacement_h1: f64,
    /// Step duration actually used.
    pub tau: f64,
    /// For each after-interval, the before-interval containing it.
    pub interval_map: Vec<Option<usize>>,
    pub accepted: bool,
}

/// Maximal intervals of a curve with their (b − a)·f_{a,b} products.
#[derive(Debug, Clone)]
pub struct CurveValue {
    pub value: f64,
    pub argmax: Option<usize>,
    pub intervals: Vec<IntervalRecord>,
    pub products: Vec<f64>,
}

pub fn curve_functional(x: &DiscreteCurve, spec: &DomainSpec) -> Result<CurveValue> {
    let intervals = maximal_intervals(x, spec)?;
    let products: Vec<f64> = intervals.iter().map(|iv| (iv.b - iv.a) * energy_unchecked(x, &spec.field, iv.a, iv.b)).collect();
    let mut value = 0.0;
    let mut argmax = None;
    for (k, &p) in products.iter().enumerate() {
        if p > value {
            value = p;
            argmax = Some(k);
        }
    }
    Ok(CurveValue { value, argmax, intervals, products })
}

/// Smooth cutoff: 1 for φ ≤ δ₀/2, 0 for φ ≥ 3δ₀/4.
pub fn chi(phi: f64, delta0: f64) -> f64 {
    let (lo, hi) = (0.5 * delta0, 0.75 * delta0);
    if phi <= lo {
        1.0
    } else if phi >= hi {
        0.0
    } else {
        let t = (phi - lo) / (hi - lo);
        1.0 - t * t * (3.0 - 2.0 * t)
    }
}

#[derive(Debug, Clone)]
pub struct DescentCertificate {
    pub chain: Chain,
    /// Chain-indexed displacement, H¹-type norm ½.
    pub v: Vec<f64>,
    /// min over near-boundary nodes of g(∇φ, V)/(‖∇φ‖ ‖V‖).
    pub theta_r: f64,
    /// −⟨df, V⟩/‖V‖.
    pub mu_r: f64,
    pub residual: f64,
    /// ⟨df, V⟩ and ⟨df, χ∇φ⟩ on the chain.
    pub slope: f64,
    pub push_slope: f64,
}

/// Cone-projected steepest descent on [a, b], normalized and tilted outward
/// near the boundary while keeping at least half of the descent rate.
pub fn descent_direction_vplus(
    x: &DiscreteCurve,
    spec: &DomainSpec,
    ledger: &ConstantsLedger,
    a: f64,
    b: f64,
    r: f64,
) -> Result<DescentCertificate> {
    let (chain, precond, grad, proj) = analyze_interval(x, spec, a, b, CONTACT_TOL)?;
    let product = (b - a) * chain.energy(&spec.field);
    let bound = ledger.short_interval_bound();
    if product < bound {
        return Err(OgcError::ShortInterval { product, bound });
    }
    if proj.norm <= r || proj.norm == 0.0 {
        return Err(OgcError::TooCloseToCritical { residual: proj.norm });
    }
    let dim = chain.dim;
    let m = chain.len();
    let scale = 0.5 / proj.norm;
    let mut v: Vec<f64> = proj.v.iter().map(|c| c * scale).collect();
    let slope0: f64 = dot(&grad, &v);
    // Outward tilt on the κ-band, capped so the slope stays below half its value.
    let mut tilt = vec![0.0; v.len()];
    for j in 0..m {
        let q = chain.node(j);
        let phi = spec.phi(q);
        if phi.abs() <= ledger.kappa_r {
            let w = 1.0 - phi.abs() / ledger.kappa_r;
            let e = spec.eta_field(q);
            let gn = spec.grad_norm(q);
            for i in 0..dim {
                tilt[j * dim + i] = w * e[i] * gn;
            }
        }
    }
    let tilt_slope = dot(&grad, &tilt);
    let tn = precond.norm(&tilt);
    if tn > 0.0 {
        let mut beta = 0.25 / tn;
        if tilt_slope > 0.0 {
            beta = beta.min(-0.5 * slope0 / tilt_slope);
        }
        for (vi, ti) in v.iter_mut().zip(&tilt) {
            *vi += beta * ti;
        }
    }
    let vn = precond.norm(&v);
    let slope = dot(&grad, &v);
    let mut theta_r = f64::INFINITY;
    for j in 0..m {
        let q = chain.node(j);
        if spec.phi(q).abs() <= ledger.kappa_r {
            let vj = &v[j * dim..(j + 1) * dim];
            let gn = spec.grad_norm(q);
            theta_r = theta_r.min(dot(&spec.dphi(q), vj) / (gn * vn));
        }
    }
    let mut push = vec![0.0; v.len()];
    for j in 0..m {
        let q = chain.node(j);
        let c = chi(spec.phi(q), ledger.delta0);
        let gp = spec.grad_phi(q);
        for i in 0..dim {
            push[j * dim + i] = c * gp[i];
        }
    }
    Ok(DescentCertificate { chain, v, theta_r, mu_r: -slope / vn, residual: proj.norm, slope, push_slope: dot(&grad, &push) })
}

#[derive(Debug, Clone)]
pub struct TypeAOptions {
    /// Use the ledger λ as is instead of capping it by the descent slope.
    pub fixed_lambda: bool,
    pub max_halvings: usize,
}

impl Default for TypeAOptions {
    fn default() -> Self {
        TypeAOptions { fixed_lambda: false, max_halvings: 30 }
    }
}

fn add_scaled(x: &DiscreteCurve, w: &[f64], tau: f64) -> DiscreteCurve {
    DiscreteCurve::from_flat(x.dim(), x.coords().iter().zip(w).map(|(a, b)| a + tau * b).collect())
}

/// Index of the before-interval containing each after-interval.
fn nesting(before: &[IntervalRecord], after: &[IntervalRecord]) -> Vec<Option<usize>> {
    after.iter().map(|iv| before.iter().position(|bv| bv.a <= iv.a + 1e-12 && iv.b <= bv.b + 1e-12)).collect()
}

/// Node field W = V_total + λ χ(φ) ∇φ for the type-A deformation.
pub fn type_a_field(x: &DiscreteCurve, spec: &DomainSpec, ledger: &ConstantsLedger, value: &CurveValue, fixed_lambda: bool) -> Vec<f64> {
    let (n, dim) = (x.n(), x.dim());
    let mut w = vec![0.0; (n + 1) * dim];
    let mut covered = vec![false; n + 1];
    // (parameter, displacement) at every interval endpoint, for constant extension.
    let mut ends: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut lambda = ledger.lambda;
    for iv in &value.intervals {
        let mut cert = match descent_direction_vplus(x, spec, ledger, iv.a, iv.b, 0.0) {
            Ok(c) => c,
            Err(_) => {
                ends.push((iv.a, vec![0.0; dim]));
                ends.push((iv.b, vec![0.0; dim]));
                for i in iv.run.0..=iv.run.1 {
                    covered[i] = true;
                }
                continue;
            }
        };
        // Unit-size directions overshoot near critical portions; fall back
        // to the raw projected gradient once it is shorter than ½.
        let shrink = (2.0 * cert.residual).min(1.0);
        cert.v.iter_mut().for_each(|c| *c *= shrink);
        cert.slope *= shrink;
        if !fixed_lambda && cert.push_slope > 0.0 {
            lambda = lambda.min(-0.5 * cert.slope / cert.push_slope);
        }
        let ch = &cert.chain;
        let m = ch.len();
        for j in 0..m {
            if let Some(i) = ch.grid[j] {
                w[i * dim..(i + 1) * dim].copy_from_slice(&cert.v[j * dim..(j + 1) * dim]);
                covered[i] = true;
            }
        }
        ends.push((ch.t[0], cert.v[..dim].to_vec()));
        ends.push((ch.t[m - 1], cert.v[(m - 1) * dim..].to_vec()));
        // Extrapolate onto the outside neighbour of each off-grid end so the
        // interpolated field at the crossing is the chain's end value.
        for (end, inner_side) in [(0, 1usize), (m - 1, 0)] {
            let t = ch.t[end] * n as f64;
            let k = (t.floor() as usize).min(n - 1);
            let th = t - k as f64;
            if ch.grid[end].is_some() || th <= 0.0 || th >= 1.0 {
                continue;
            }
            let (out, inn, w_out) = if inner_side == 1 { (k, k + 1, 1.0 - th) } else { (k + 1, k, th) };
            if w_out < 0.05 || covered[out] {
                continue;
            }
            let ve = &cert.v[end * dim..(end + 1) * dim];
            for c in 0..dim {
                w[out * dim + c] = (ve[c] - (1.0 - w_out) * w[inn * dim + c]) / w_out;
            }
            covered[out] = true;
        }
    }
    let delta0 = ledger.delta0;
    for i in 0..=n {
        if covered[i] || ends.is_empty() {
            continue;
        }
        let s = x.param(i);
        let best = ends.iter().map(|(t, _)| (t - s).abs()).fold(f64::INFINITY, f64::min);
        let near: Vec<&Vec<f64>> = ends.iter().filter(|(t, _)| ((t - s).abs() - best).abs() <= 1e-14).map(|(_, v)| v).collect();
        let c = chi(spec.phi(x.node(i)), delta0) / near.len() as f64;
        for v in near {
            for k in 0..dim {
                w[i * dim + k] += c * v[k];
            }
        }
    }
    for i in 0..=n {
        let q = x.node(i);
        let c = lambda * chi(spec.phi(q), delta0);
        if c != 0.0 {
            let g = spec.grad_phi(q);
            for k in 0..dim {
                w[i * dim + k] += c * g[k];
            }
        }
    }
    w
}

pub fn type_a_step(x: &DiscreteCurve, spec: &DomainSpec, ledger: &ConstantsLedger, tau: f64) -> Result<FlowStepResult> {
    type_a_step_with(x, spec, ledger, tau, &TypeAOptions::default())
}

/// One explicit step along the type-A field with backtracking on ℱ.
pub fn type_a_step_with(
    x: &DiscreteCurve,
    spec: &DomainSpec,
    ledger: &ConstantsLedger,
    tau: f64,
    opts: &TypeAOptions,
) -> Result<FlowStepResult> {
    let before = curve_functional(x, spec)?;
    let mut w = type_a_field(x, spec, ledger, &before, opts.fixed_lambda);
    let wn = h1_norm(&DiscreteCurve::from_flat(x.dim(), w.clone()), 0.0, 1.0)?;
    if wn > 1.0 {
        w.iter_mut().for_each(|c| *c /= wn);
    }
    let wn = wn.min(1.0);
    let mut t = tau.min(ledger.t_eps);
    let mut left_m = false;
    for _ in 0..=opts.max_halvings {
        let y = add_scaled(x, &w, t);
        if y.nodes().all(|p| spec.field.is_valid_point(p)) {
            if let Ok(after) = curve_functional(&y, spec) {
                let map = nesting(&before.intervals, &after.intervals);
                let within_m = after.intervals.iter().all(|iv| energy_unchecked(&y, &spec.field, iv.a, iv.b) < ledger.m0);
                left_m |= !within_m;
                let decreased = after.value < before.value || (before.value == 0.0 && after.value == 0.0);
                if decreased && within_m && map.iter().all(Option::is_some) {
                    return Ok(FlowStepResult {
                        curve: y,
                        f_before: before.value,
                        f_after: after.value,
                        step_kind: StepKind::A,
                        displacement_h1: t * wn,
                        tau: t,
                        interval_map: map,
                        accepted: true,
                    });
                }
            }
        }
        t *= 0.5;
    }
    if left_m {
        return Err(OgcError::LeftM);
    }
    Ok(FlowStepResult {
        curve: x.clone(),
        f_before: before.value,
        f_after: before.value,
        step_kind: StepKind::A,
        displacement_h1: 0.0,
        tau: 0.0,
        interval_map: nesting(&before.intervals, &before.intervals),
        accepted: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Minus,
    Plus,
}

/// Piecewise-affine reparameterization fixing a and b that sends c ∓ τ to c.
pub fn reparam_phi(x: &DiscreteCurve, a: f64, c: f64, b: f64, tau: f64, side: Side) -> Result<DiscreteCurve> {
    let split = match side {
        Side::Minus => c - tau,
        Side::Plus => c + tau,
    };
    if !(a < c && c < b && split > a && split < b) {
        return Err(OgcError::DegenerateSplit);
    }
    let map = |s: f64| -> f64 {
        if s <= a || s >= b {
            s
        } else if s <= split {
            a + (c - a) / (split - a) * (s - a)
        } else {
            c + (b - c) / (b - split) * (s - split)
        }
    };
    Ok(DiscreteCurve::from_fn(x.dim(), x.n(), |s| x.eval(map(s))))
}

/// ∫_a^c g(ẋ,ẋ) and ∫_c^b g(ẋ,ẋ).
pub fn split_integrals(x: &DiscreteCurve, spec: &DomainSpec, a: f64, c: f64, b: f64) -> (f64, f64) {
    (2.0 * energy_unchecked(x, &spec.field, a, c), 2.0 * energy_unchecked(x, &spec.field, c, b))
}

/// f_{a,b} after `reparam_phi`, from the two split integrals.
pub fn reparam_energy(i1: f64, i2: f64, a: f64, c: f64, b: f64, tau: f64, side: Side) -> f64 {
    let split = match side {
        Side::Minus => c - tau,
        Side::Plus => c + tau,
    };
    0.5 * ((c - a) / (split - a) * i1 + (b - c) / (b - split) * i2)
}

/// d/dτ of `reparam_energy` at τ = 0.
pub fn reparam_energy_derivative(i1: f64, i2: f64, a: f64, c: f64, b: f64, side: Side) -> f64 {
    let d = 0.5 * (i1 / (c - a) - i2 / (b - c));
    match side {
        Side::Minus => d,
        Side::Plus => -d,
    }
}

/// Split point, side and optimal τ for a portion with a constant tail.
fn type_b_plan(x: &DiscreteCurve, spec: &DomainSpec, iv: &IntervalRecord) -> Option<(f64, Side, f64, f64)> {
    let (a, b) = (iv.a, iv.b);
    let (lm, lp) = constant_tails(x, a, b, 1e-12);
    if lm + lp <= 0.0 || lm + lp >= b - a {
        return None;
    }
    let body = b - a - lm - lp;
    let theta = 0.25 * body.min(lm.max(lp));
    let c = if lm >= lp { a + lm + theta } else { b - lp - theta };
    let (i1, i2) = split_integrals(x, spec, a, c, b);
    let dm = reparam_energy_derivative(i1, i2, a, c, b, Side::Minus);
    if dm.abs() < 1e-12 {
        return None;
    }
    let side = if dm < 0.0 { Side::Minus } else { Side::Plus };
    // Closed-form minimizer of ½(A/(p∓τ) + B/(q±τ)).
    let (p, q) = (c - a, b - c);
    let (sa, sb) = (((c - a) * i1).sqrt(), ((b - c) * i2).sqrt());
    let tau = match side {
        Side::Minus => (sb * p - sa * q) / (sa + sb),
        Side::Plus => (sa * q - sb * p) / (sa + sb),
    };
    let cap = 0.9 * if side == Side::Minus { p } else { q };
    let tau = tau.clamp(0.0, cap);
    (tau > 0.0).then_some((c, side, tau, dm.abs()))
}

/// Reparameterizes the highest second-type portion to move parameter mass off its constant tail.
pub fn type_b_step(x: &DiscreteCurve, spec: &DomainSpec, _ledger: &ConstantsLedger) -> Result<FlowStepResult> {
    let before = curve_functional(x, spec)?;
    let mut order: Vec<usize> = (0..before.intervals.len()).collect();
    order.sort_by(|&i, &j| before.products[j].total_cmp(&before.products[i]));
    for k in order {
        let iv = &before.intervals[k];
        let Some((c, side, tau0, _)) = type_b_plan(x, spec, iv) else { continue };
        let mut tau = tau0;
        for _ in 0..30 {
            let y = reparam_phi(x, iv.a, c, iv.b, tau, side)?;
            let after = curve_functional(&y, spec)?;
            let new_product = after
                .intervals
                .iter()
                .zip(&after.products)
                .filter(|(jv, _)| jv.a >= iv.a - 1e-12 && jv.b <= iv.b + 1e-12)
                .map(|(_, p)| *p)
                .fold(0.0, f64::max);
            if new_product < before.products[k] && after.value <= before.value {
                let disp = DiscreteCurve::from_flat(x.dim(), y.coords().iter().zip(x.coords()).map(|(p, q)| p - q).collect());
                return Ok(FlowStepResult {
                    interval_map: nesting(&before.intervals, &after.intervals),
                    displacement_h1: h1_norm(&disp, 0.0, 1.0)?,
                    curve: y,
                    f_before: before.value,
                    f_after: after.value,
                    step_kind: StepKind::B,
                    tau,
                    accepted: true,
                });
            }
            tau *= 0.5;
        }
    }
    Err(OgcError::NotSecondType)
}

/// Pushes boundary-hugging sub-arcs inward until their proximity is ≤ −σ₁/2.
pub fn type_c_step(x: &DiscreteCurve, spec: &DomainSpec, ledger: &ConstantsLedger) -> Result<FlowStepResult> {
    let targets = find_nonessential_intervals(x, spec, &ledger.proximity())?;
    if targets.is_empty() {
        return Err(OgcError::NoNonessential);
    }
    let before = curve_functional(x, spec)?;
    let mut y = x.clone();
    let floor = -ledger.delta_bar + ledger.eps0;
    let core = -ledger.sigma1;
    let shell = spec.shell();
    for iv in &targets {
        let idx: Vec<usize> = (0..=x.n()).filter(|&i| x.param(i) > iv.a && x.param(i) < iv.b).collect();
        let prox = idx.iter().map(|&i| spec.phi(x.node(i))).fold(f64::NEG_INFINITY, f64::max);
        let depth = (prox + 0.5 * ledger.sigma1 + 0.05 * ledger.sigma1).max(0.0);
        if depth == 0.0 {
            continue;
        }
        for &i in &idx {
            let p = x.node(i);
            let phi = spec.phi(p);
            if phi <= floor {
                continue;
            }
            let t = ((phi - floor) / (core - floor)).clamp(0.0, 1.0);
            let w = t * t * (3.0 - 2.0 * t);
            let amount = w * depth;
            if amount > 0.0 {
                let q = eta(spec, p, -amount, shell)?;
                y.node_mut(i).copy_from_slice(&q);
            }
        }
    }
    let after = curve_functional(&y, spec)?;
    let accepted = after.value <= before.value + 1e-12;
    let disp = DiscreteCurve::from_flat(x.dim(), y.coords().iter().zip(x.coords()).map(|(p, q)| p - q).collect());
    let displacement_h1 = h1_norm(&disp, 0.0, 1.0)?;
    Ok(FlowStepResult {
        interval_map: nesting(&before.intervals, &after.intervals),
        displacement_h1,
        curve: if accepted { y } else { x.clone() },
        f_before: before.value,
        f_after: if accepted { after.value } else { before.value },
        step_kind: StepKind::C,
        tau: 2.0 * displacement_h1 / ledger.rho0,
        accepted,
    })
}
