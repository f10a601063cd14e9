//! Natural Hamiltonians H = ½ a^{ij}(q) p_i p_j + V(q), their brake orbits,
//! and the Jacobi metric that turns those orbits into boundary chords.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::domain::{DomainSpec, MatrixFn};
use crate::error::{OgcError, Result};
use crate::geometry::{dist, dot, norm, ChartDomain, ConformalFactor, MetricField, MetricFn, ScalarFn, VectorFn};
use crate::minimax::{solve_existence, ChordResult, SolveOptions, SolveReport};

#[derive(Clone)]
pub struct NaturalHamiltonian {
    pub name: String,
    pub dim: usize,
    /// Inverse kinetic matrix a^{ij}; `None` means the identity.
    pub a_upper: Option<MetricFn>,
    pub v: ScalarFn,
    pub dv: VectorFn,
    pub ddv: MatrixFn,
    pub energy: f64,
    pub v_min: f64,
    pub argmin: Vec<f64>,
    /// Radius around `argmin` of a ball containing {V ≤ E}.
    pub extent: f64,
}

impl std::fmt::Debug for NaturalHamiltonian {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NaturalHamiltonian").field("name", &self.name).field("dim", &self.dim).field("energy", &self.energy).finish()
    }
}

impl NaturalHamiltonian {
    /// V(q) = Σ λᵢ² qᵢ² with a = I.
    pub fn ellipsoid(lambdas: &[f64], energy: f64) -> Result<NaturalHamiltonian> {
        if lambdas.contains(&0.0) {
            return Err(OgcError::ZeroLambda);
        }
        if lambdas.is_empty() || !(energy > 0.0) {
            return Err(OgcError::InvalidInput(format!("energy {energy} must exceed inf V = 0")));
        }
        let sq: Vec<f64> = lambdas.iter().map(|l| l * l).collect();
        let (s1, s2, s3) = (sq.clone(), sq.clone(), sq.clone());
        let min_l = lambdas.iter().fold(f64::INFINITY, |m, l| m.min(l.abs()));
        let n = lambdas.len();
        Ok(NaturalHamiltonian {
            name: format!("ellipsoid{lambdas:?}"),
            dim: n,
            a_upper: None,
            v: Arc::new(move |q: &[f64]| q.iter().zip(&s1).map(|(x, s)| s * x * x).sum()),
            dv: Arc::new(move |q: &[f64]| q.iter().zip(&s2).map(|(x, s)| 2.0 * s * x).collect()),
            ddv: Arc::new(move |_q: &[f64]| DMatrix::from_diagonal(&DVector::from_iterator(n, s3.iter().map(|s| 2.0 * s)))),
            energy,
            v_min: 0.0,
            argmin: vec![0.0; n],
            extent: 1.2 * energy.sqrt() / min_l,
        })
    }

    pub fn with_energy(mut self, energy: f64) -> Self {
        self.extent *= (energy / self.energy).max(0.0).sqrt().max(1e-12);
        self.energy = energy;
        self
    }

    pub fn potential(&self, q: &[f64]) -> f64 {
        (self.v)(q)
    }

    fn a_at(&self, q: &[f64]) -> DMatrix<f64> {
        match &self.a_upper {
            Some(a) => a(q),
            None => DMatrix::identity(self.dim, self.dim),
        }
    }

    pub fn hamiltonian(&self, q: &[f64], p: &[f64]) -> f64 {
        let pv = DVector::from_column_slice(p);
        0.5 * pv.dot(&(self.a_at(q) * &pv)) + (self.v)(q)
    }

    /// (q̇, ṗ) = (a p, −∇V − ½ pᵀ ∂a p).
    fn vector_field(&self, q: &[f64], p: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let pv = DVector::from_column_slice(p);
        let qdot = (self.a_at(q) * &pv).as_slice().to_vec();
        let mut pdot: Vec<f64> = (self.dv)(q).into_iter().map(|x| -x).collect();
        if self.a_upper.is_some() {
            let h = 1e-6;
            for k in 0..self.dim {
                let mut qp = q.to_vec();
                qp[k] += h;
                let ap = self.a_at(&qp);
                qp[k] -= 2.0 * h;
                let am = self.a_at(&qp);
                let da = (ap - am) / (2.0 * h);
                pdot[k] -= 0.5 * pv.dot(&(da * &pv));
            }
        }
        (qdot, pdot)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HamiltonTrajectory {
    pub times: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
}

const FR_THETA: f64 = 1.351_207_191_959_657_8; // 1/(2 − 2^{1/3})

/// One fourth-order Forest–Ruth step for a = I.
fn forest_ruth(ham: &NaturalHamiltonian, q: &mut [f64], p: &mut [f64], h: f64) {
    let th = FR_THETA;
    let drift = [th / 2.0, (1.0 - th) / 2.0, (1.0 - th) / 2.0, th / 2.0];
    let kick = [th, 1.0 - 2.0 * th, th];
    for s in 0..4 {
        for i in 0..q.len() {
            q[i] += drift[s] * h * p[i];
        }
        if s < 3 {
            let g = (ham.dv)(q);
            for i in 0..p.len() {
                p[i] -= kick[s] * h * g[i];
            }
        }
    }
}

fn rk4(ham: &NaturalHamiltonian, q: &mut [f64], p: &mut [f64], h: f64) {
    let n = q.len();
    let add = |x: &[f64], d: &[f64], s: f64| -> Vec<f64> { x.iter().zip(d).map(|(a, b)| a + s * b).collect() };
    let (k1q, k1p) = ham.vector_field(q, p);
    let (k2q, k2p) = ham.vector_field(&add(q, &k1q, 0.5 * h), &add(p, &k1p, 0.5 * h));
    let (k3q, k3p) = ham.vector_field(&add(q, &k2q, 0.5 * h), &add(p, &k2p, 0.5 * h));
    let (k4q, k4p) = ham.vector_field(&add(q, &k3q, h), &add(p, &k3p, h));
    for i in 0..n {
        q[i] += h / 6.0 * (k1q[i] + 2.0 * k2q[i] + 2.0 * k3q[i] + k4q[i]);
        p[i] += h / 6.0 * (k1p[i] + 2.0 * k2p[i] + 2.0 * k3p[i] + k4p[i]);
    }
}

fn step_once(ham: &NaturalHamiltonian, q: &mut [f64], p: &mut [f64], h: f64) {
    if ham.a_upper.is_none() {
        forest_ruth(ham, q, p, h);
    } else {
        rk4(ham, q, p, h);
    }
}

/// Fixed-step integration over [0, t]: Forest–Ruth when a is the identity,
/// RK4 otherwise. Fails if H drifts by more than 1e−7 per unit time.
pub fn hamilton_flow(ham: &NaturalHamiltonian, q0: &[f64], p0: &[f64], t: f64, step: f64) -> Result<HamiltonTrajectory> {
    if !(step > 0.0) || !(t >= 0.0) || q0.len() != ham.dim || p0.len() != ham.dim {
        return Err(OgcError::InvalidInput("bad flow arguments".into()));
    }
    let steps = (t / step).ceil().max(1.0) as usize;
    let h = t / steps as f64;
    let h0 = ham.hamiltonian(q0, p0);
    if !h0.is_finite() {
        return Err(OgcError::InvalidInput("initial energy is not finite".into()));
    }
    let (mut q, mut p) = (q0.to_vec(), p0.to_vec());
    let mut traj = HamiltonTrajectory { times: vec![0.0], q: vec![q.clone()], p: vec![p.clone()] };
    let budget = 1e-7 * t.max(1.0);
    for k in 1..=steps {
        step_once(ham, &mut q, &mut p, h);
        let drift = (ham.hamiltonian(&q, &p) - h0).abs();
        if !(drift <= budget) {
            return Err(OgcError::EnergyDrift { drift });
        }
        traj.times.push(k as f64 * h);
        traj.q.push(q.clone());
        traj.p.push(p.clone());
    }
    Ok(traj)
}

/// Value and derivative of u ↦ u for u ≥ ρ/4, continued as a positive C¹
/// exponential below. Only {V > E − ρ/4} is affected, well outside the shell.
fn soften(u: f64, rho: f64) -> (f64, f64) {
    let k = 0.25 * rho;
    if u >= k {
        (u, 1.0)
    } else {
        let e = ((u - k) / k).exp();
        (k * e, e)
    }
}

/// g_J = (E − V)·a_{ij} on {V < E}, with boundary φ = V − (E − ρ).
pub fn jacobi_metric(ham: &NaturalHamiltonian, rho: f64) -> Result<DomainSpec> {
    let gap = ham.energy - ham.v_min;
    if !(rho > 0.0 && rho < gap) {
        return Err(OgcError::BadRho(format!("rho = {rho} must lie in (0, {gap})")));
    }
    let level = ham.energy - rho;
    // A boundary needs V to reach E − ρ somewhere inside the chart ball.
    let reach = (0..ham.dim).any(|i| {
        [1.0, -1.0].iter().any(|s| {
            let mut q = ham.argmin.clone();
            q[i] += s * ham.extent;
            ham.potential(&q) > level
        })
    });
    if !reach {
        return Err(OgcError::BadRho("the potential never reaches E - rho: the domain has no boundary".into()));
    }
    let e = ham.energy;
    let chart = ChartDomain::Ball { center: ham.argmin.clone(), radius: ham.extent };
    let field = match &ham.a_upper {
        None => {
            let (v, v2, dv) = (ham.v.clone(), ham.v.clone(), ham.dv.clone());
            MetricField::conformal(
                chart,
                ConformalFactor {
                    f: Arc::new(move |q: &[f64]| soften(e - v(q), rho).0),
                    grad: Arc::new(move |q: &[f64]| {
                        let d = soften(e - v2(q), rho).1;
                        dv(q).into_iter().map(|x| -d * x).collect()
                    }),
                },
            )
        }
        Some(a) => {
            let (v, a) = (ham.v.clone(), a.clone());
            MetricField::general(
                chart,
                Arc::new(move |q: &[f64]| a(q).try_inverse().unwrap_or_else(|| DMatrix::zeros(q.len(), q.len())) * soften(e - v(q), rho).0),
            )
        }
    };
    let (v, dv, ddv) = (ham.v.clone(), ham.dv.clone(), ham.ddv.clone());
    Ok(DomainSpec::new(
        format!("jacobi({}, E={}, rho={rho})", ham.name, ham.energy),
        field,
        Arc::new(move |q: &[f64]| v(q) - level),
        dv,
        ddv,
        ham.argmin.clone(),
        ChartDomain::Ball { center: ham.argmin.clone(), radius: ham.extent },
        0.5 * rho,
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct BrakeOrbit {
    pub times: Vec<f64>,
    pub q_traj: Vec<Vec<f64>>,
    pub p_traj: Vec<Vec<f64>>,
    pub half_period: f64,
    pub residual_p0: f64,
    #[serde(rename = "residual_pT")]
    pub residual_pt: f64,
    /// Half the distance between the two turning points.
    pub amplitude: f64,
    pub newton_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct ShootingOptions {
    pub step: f64,
    pub max_time: f64,
    pub max_iters: usize,
    pub damping: f64,
    pub tol: f64,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        ShootingOptions { step: 1e-3, max_time: 50.0, max_iters: 50, damping: 0.5, tol: 1e-10 }
    }
}

/// Moves q along ∇V onto {V = E}.
pub fn lift_to_turning_set(ham: &NaturalHamiltonian, q: &[f64]) -> Result<Vec<f64>> {
    let mut x = q.to_vec();
    for _ in 0..100 {
        let r = ham.energy - ham.potential(&x);
        if r.abs() < 1e-14 * ham.energy.abs().max(1.0) {
            return Ok(x);
        }
        let g = (ham.dv)(&x);
        let gg = dot(&g, &g);
        if !(gg > 1e-300) {
            break;
        }
        for i in 0..x.len() {
            x[i] += r / gg * g[i];
        }
    }
    if (ham.energy - ham.potential(&x)).abs() < 1e-10 {
        Ok(x)
    } else {
        Err(OgcError::ShootingDiverged(format!("could not reach V = E from {q:?}")))
    }
}

/// d/dt ½ pᵀ a p up to a positive factor for a = I; in general the sign of
/// the kinetic-energy rate −q̇·∇V.
fn kinetic_rate(ham: &NaturalHamiltonian, q: &[f64], p: &[f64]) -> f64 {
    let (qdot, _) = ham.vector_field(q, p);
    -dot(&qdot, &(ham.dv)(q))
}

/// Integrates from rest at q0 up to the first return to rest (kinetic energy
/// minimum), refined by bisection on the kinetic-energy rate.
fn shoot(ham: &NaturalHamiltonian, q0: &[f64], opts: &ShootingOptions) -> Result<BrakeOrbit> {
    let n = ham.dim;
    let h0 = ham.hamiltonian(q0, &vec![0.0; n]);
    let (mut q, mut p) = (q0.to_vec(), vec![0.0; n]);
    let mut traj = HamiltonTrajectory { times: vec![0.0], q: vec![q.clone()], p: vec![p.clone()] };
    let mut t = 0.0;
    let mut prev = 0.0;
    let mut rising = false;
    loop {
        let (qs, ps) = (q.clone(), p.clone());
        step_once(ham, &mut q, &mut p, opts.step);
        t += opts.step;
        if (ham.hamiltonian(&q, &p) - h0).abs() > 1e-7 * t.max(1.0) {
            return Err(OgcError::EnergyDrift { drift: (ham.hamiltonian(&q, &p) - h0).abs() });
        }
        let rate = kinetic_rate(ham, &q, &p);
        if rate > 0.0 {
            rising = true;
        }
        if rising && prev < 0.0 && rate >= 0.0 {
            // Bracketed between t − step and t: bisect on the rate.
            let (mut lo, mut hi) = (0.0, opts.step);
            let (mut qe, mut pe) = (q.clone(), p.clone());
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let (mut qm, mut pm) = (qs.clone(), ps.clone());
                step_once(ham, &mut qm, &mut pm, mid);
                if kinetic_rate(ham, &qm, &pm) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                qe = qm;
                pe = pm;
            }
            let tt = t - opts.step + 0.5 * (lo + hi);
            traj.times.push(tt);
            traj.q.push(qe.clone());
            traj.p.push(pe.clone());
            return Ok(BrakeOrbit {
                amplitude: 0.5 * dist(q0, &qe),
                residual_p0: 0.0,
                residual_pt: norm(&pe),
                half_period: tt,
                times: traj.times,
                q_traj: traj.q,
                p_traj: traj.p,
                newton_iterations: 0,
            });
        }
        prev = rate;
        traj.times.push(t);
        traj.q.push(q.clone());
        traj.p.push(p.clone());
        if t > opts.max_time {
            return Err(OgcError::ShootingDiverged(format!("no return to rest within t = {}", opts.max_time)));
        }
    }
}

/// Orthonormal basis of the Euclidean complement of `g`.
fn tangent_basis(g: &[f64]) -> Vec<Vec<f64>> {
    let n = g.len();
    let gn = norm(g);
    let u: Vec<f64> = g.iter().map(|x| x / gn).collect();
    let mut out: Vec<Vec<f64>> = Vec::new();
    for k in 0..n {
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        let c = dot(&e, &u);
        let mut w: Vec<f64> = e.iter().zip(&u).map(|(a, b)| a - c * b).collect();
        for b in &out {
            let c = dot(&w, b);
            w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        let wn = norm(&w);
        if wn > 1e-8 {
            out.push(w.into_iter().map(|x| x / wn).collect());
        }
        if out.len() == n - 1 {
            break;
        }
    }
    out
}

/// Gauss–Newton on the launch point over {V = E} until the return momentum vanishes.
pub fn brake_orbit_from_point(ham: &NaturalHamiltonian, start: &[f64], opts: &ShootingOptions) -> Result<BrakeOrbit> {
    let mut q0 = lift_to_turning_set(ham, start)?;
    let mut orbit = shoot(ham, &q0, opts)?;
    let mut iters = 0;
    while orbit.residual_pt >= opts.tol && iters < opts.max_iters {
        iters += 1;
        let basis = tangent_basis(&(ham.dv)(&q0));
        let r0 = orbit.p_traj.last().unwrap().clone();
        let h = 1e-6;
        let mut jac = DMatrix::zeros(ham.dim, basis.len());
        for (c, b) in basis.iter().enumerate() {
            let qp: Vec<f64> = q0.iter().zip(b).map(|(x, y)| x + h * y).collect();
            let o = shoot(ham, &lift_to_turning_set(ham, &qp)?, opts)?;
            let rp = o.p_traj.last().unwrap();
            for i in 0..ham.dim {
                jac[(i, c)] = (rp[i] - r0[i]) / h;
            }
        }
        let rhs = DVector::from_iterator(ham.dim, r0.iter().map(|x| -x));
        let du = jac.svd(true, true).solve(&rhs, 1e-14).map_err(|e| OgcError::ShootingDiverged(e.to_string()))?;
        let mut scale = 1.0;
        let mut accepted = false;
        while scale > 1e-6 {
            let trial: Vec<f64> =
                (0..ham.dim).map(|i| q0[i] + scale * basis.iter().enumerate().map(|(c, b)| du[c] * b[i]).sum::<f64>()).collect();
            if let Ok(qt) = lift_to_turning_set(ham, &trial) {
                if let Ok(o) = shoot(ham, &qt, opts) {
                    if o.residual_pt < orbit.residual_pt {
                        q0 = qt;
                        orbit = o;
                        accepted = true;
                        break;
                    }
                }
            }
            scale *= opts.damping;
        }
        if !accepted {
            break;
        }
    }
    orbit.newton_iterations = iters;
    if orbit.residual_pt >= 1e-6 {
        return Err(OgcError::ShootingDiverged(format!("return momentum {:e} after {iters} iterations", orbit.residual_pt)));
    }
    Ok(orbit)
}

pub fn brake_orbit_from_chord(ham: &NaturalHamiltonian, chord: &ChordResult, opts: &ShootingOptions) -> Result<BrakeOrbit> {
    brake_orbit_from_point(ham, &chord.boundary_points.0, opts)
}

/// max over t of |q(t) − q(2T − t)| after continuing the orbit to 2T.
pub fn brake_symmetry_defect(ham: &NaturalHamiltonian, orbit: &BrakeOrbit, step: f64) -> Result<f64> {
    let t = orbit.half_period;
    let q0 = &orbit.q_traj[0];
    let full = hamilton_flow(ham, q0, &vec![0.0; ham.dim], 2.0 * t, step)?;
    let m = full.times.len() - 1;
    Ok((0..=m).map(|k| dist(&full.q[k], &full.q[m - k])).fold(0.0, f64::max))
}

#[derive(Debug, Clone, Serialize)]
pub struct EllipsoidReference {
    pub orbits: Vec<BrakeOrbit>,
    /// Some frequency ratio λᵢ/λⱼ is p/q with q ≤ 20.
    pub rational_ratio: bool,
}

fn near_rational(x: f64) -> bool {
    (1..=20).any(|q| {
        let p = (x * q as f64).round();
        (x * q as f64 - p).abs() < 1e-9 * q as f64
    })
}

/// Axis orbits qᵢ(t) = (√E/λᵢ) cos(√2 λᵢ t) of the ellipsoid well.
pub fn ellipsoid_reference(lambdas: &[f64], energy: f64) -> Result<EllipsoidReference> {
    if lambdas.contains(&0.0) {
        return Err(OgcError::ZeroLambda);
    }
    let mut rational = false;
    for i in 0..lambdas.len() {
        for j in 0..lambdas.len() {
            if i != j && near_rational((lambdas[i] / lambdas[j]).abs()) {
                rational = true;
            }
        }
    }
    if !(energy > 0.0) {
        return Ok(EllipsoidReference { orbits: Vec::new(), rational_ratio: rational });
    }
    let n = lambdas.len();
    let orbits = lambdas
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let l = l.abs();
            let amp = energy.sqrt() / l;
            let w = 2f64.sqrt() * l;
            let t = std::f64::consts::PI / w;
            let m = 200;
            let times: Vec<f64> = (0..=m).map(|k| t * k as f64 / m as f64).collect();
            let axis = |v: f64| {
                let mut e = vec![0.0; n];
                e[i] = v;
                e
            };
            BrakeOrbit {
                q_traj: times.iter().map(|s| axis(amp * (w * s).cos())).collect(),
                p_traj: times.iter().map(|s| axis(-amp * w * (w * s).sin())).collect(),
                times,
                half_period: t,
                residual_p0: 0.0,
                residual_pt: 0.0,
                amplitude: amp,
                newton_iterations: 0,
            }
        })
        .collect();
    Ok(EllipsoidReference { orbits, rational_ratio: rational })
}

/// Keeps one orbit per half-period cluster of width `tol`, unless the turning
/// points differ.
pub fn dedup_orbits(mut orbits: Vec<BrakeOrbit>, tol: f64) -> Vec<BrakeOrbit> {
    orbits.sort_by(|a, b| b.half_period.total_cmp(&a.half_period));
    let mut kept: Vec<BrakeOrbit> = Vec::new();
    for o in orbits {
        let ends = |b: &BrakeOrbit| (b.q_traj[0].clone(), b.q_traj.last().unwrap().clone());
        let (a0, a1) = ends(&o);
        let dup = kept.iter().any(|k| {
            let (b0, b1) = ends(k);
            let same = (dist(&a0, &b0) < 1e-4 && dist(&a1, &b1) < 1e-4) || (dist(&a0, &b1) < 1e-4 && dist(&a1, &b0) < 1e-4);
            (k.half_period - o.half_period).abs() < tol && same
        });
        if !dup {
            kept.push(o);
        }
    }
    kept
}

#[derive(Debug, Clone)]
pub struct BrakeReport {
    pub orbits: Vec<BrakeOrbit>,
    pub solve: SolveReport,
    pub spec: DomainSpec,
}

/// Jacobi domain → chords → shooting from each chord endpoint → dedup.
pub fn brake_orbits(ham: &NaturalHamiltonian, rho: f64, solve: &SolveOptions, shooting: &ShootingOptions) -> Result<BrakeReport> {
    let spec = jacobi_metric(ham, rho)?;
    let report = solve_existence(&spec, solve)?;
    let orbits: Vec<BrakeOrbit> = report.chords.par_iter().filter_map(|c| brake_orbit_from_chord(ham, c, shooting).ok()).collect();
    if orbits.is_empty() {
        return Err(OgcError::ShootingDiverged("no chord led to a brake orbit".into()));
    }
    Ok(BrakeReport { orbits: dedup_orbits(orbits, 1e-6), solve: report, spec })
}
