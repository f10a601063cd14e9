//! The sup functional over a family of curves, its deformation towards lower
//! levels, and extraction of the chords at which the deformation gets stuck.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criticality::{find_nonessential_intervals, is_ogc, residual_vplus, OgcCheck};
use crate::domain::{check_strong_concavity, compute_k0, sample_boundary, ConcavityReport, DomainSpec};
use crate::error::{OgcError, Result};
use crate::flows::{curve_functional, type_a_step, type_b_step, type_c_step, ConstantsLedger, FlowStepResult, LedgerOverrides, StepKind};
use crate::geometry::{dist, integrate_geodesic, norm};
use crate::pathspace::{
    boundary_grid, canonical_pairs, energy_unchecked, length, restrict_resample, reverse, DiscreteCurve, GeneratorOptions, PathFamily,
};
use crate::variation::Chain;

/// A family of current curves indexed by canonical boundary pairs (i ≤ j);
/// the (j, i) curve is the reversal of the (i, j) one.
#[derive(Debug, Clone)]
pub struct HomotopyState {
    pub grid: Vec<Vec<f64>>,
    pub pairs: Vec<(usize, usize)>,
    pub curves: Vec<DiscreteCurve>,
    pub values: Vec<f64>,
    /// Trial type-A step per seed.
    pub step: Vec<f64>,
    pub retired: Vec<bool>,
    pub tag_log: Vec<StepKind>,
    pub m0: f64,
    pub trace: Vec<TraceRow>,
    iter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub step_kind: StepKind,
    #[serde(rename = "F")]
    pub f: f64,
    pub residual: f64,
    pub displacement: f64,
    pub cusps: usize,
}

impl HomotopyState {
    pub fn from_family(family: &PathFamily, spec: &DomainSpec) -> Result<HomotopyState> {
        let values = family.curves.par_iter().map(|c| curve_functional(c, spec).map(|v| v.value)).collect::<Result<Vec<_>>>()?;
        let k = family.curves.len();
        Ok(HomotopyState {
            grid: family.grid.clone(),
            pairs: canonical_pairs(family.grid.len()),
            curves: family.curves.clone(),
            values,
            step: vec![0.1; k],
            retired: vec![false; k],
            tag_log: Vec::new(),
            m0: family.m0,
            trace: Vec::new(),
            iter: 0,
        })
    }

    /// State over an explicit grid; `curves` follows `canonical_pairs(grid.len())`.
    pub fn from_curves(grid: Vec<Vec<f64>>, curves: Vec<DiscreteCurve>, m0: f64, spec: &DomainSpec) -> Result<HomotopyState> {
        let pairs = canonical_pairs(grid.len());
        if pairs.len() != curves.len() {
            return Err(OgcError::InvalidInput(format!("{} curves for {} boundary pairs", curves.len(), pairs.len())));
        }
        let family = PathFamily { grid, curves, m0 };
        HomotopyState::from_family(&family, spec)
    }

    /// Current sup over active seeds.
    pub fn functional(&self) -> f64 {
        self.argmax().map_or(0.0, |k| self.values[k])
    }

    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for k in 0..self.values.len() {
            if self.retired[k] {
                continue;
            }
            if best.map_or(true, |b| self.values[k] > self.values[b]) {
                best = Some(k);
            }
        }
        best
    }

    pub fn curve(&self, i: usize, j: usize) -> DiscreteCurve {
        let c = &self.curves[crate::pathspace::pair_index(self.grid.len(), i, j)];
        if i <= j {
            c.clone()
        } else {
            reverse(c)
        }
    }

    /// Hash of the node coordinates, used to check that transitions chain up.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for c in &self.curves {
            for v in c.coords() {
                v.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }
}

/// Recomputes the sup functional from scratch, checking membership in the
/// energy sublevel.
pub fn functional_f(state: &HomotopyState, spec: &DomainSpec) -> Result<f64> {
    let mut best: f64 = 0.0;
    for (k, c) in state.curves.iter().enumerate() {
        if state.retired[k] {
            continue;
        }
        let v = curve_functional(c, spec)?;
        if v.intervals.iter().any(|iv| energy_unchecked(c, &spec.field, iv.a, iv.b) >= state.m0) {
            return Err(OgcError::CurveLeftM);
        }
        best = best.max(v.value);
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: StepKind,
    pub start: f64,
    pub end: f64,
}

/// A state-to-state deformation recorded as pure A/B/C time segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub from: u64,
    pub to: u64,
    pub segments: Vec<Segment>,
}

impl Transition {
    pub fn identity(fingerprint: u64) -> Transition {
        Transition { from: fingerprint, to: fingerprint, segments: Vec::new() }
    }

    /// Equal-length segments, one per run of equal tags.
    pub fn from_tags(from: u64, to: u64, tags: &[StepKind]) -> Transition {
        let mut runs: Vec<StepKind> = Vec::new();
        for &t in tags {
            if runs.last() != Some(&t) {
                runs.push(t);
            }
        }
        let k = runs.len() as f64;
        let segments =
            runs.into_iter().enumerate().map(|(i, kind)| Segment { kind, start: i as f64 / k, end: (i + 1) as f64 / k }).collect();
        Transition { from, to, segments }
    }

    pub fn tag_log(&self) -> Vec<StepKind> {
        self.segments.iter().map(|s| s.kind).collect()
    }

    pub fn is_identity(&self) -> bool {
        self.segments.is_empty() && self.from == self.to
    }
}

/// h₁ on [0, ½] followed by h₂ on [½, 1].
pub fn concatenate(h1: &Transition, h2: &Transition) -> Result<Transition> {
    if h1.to != h2.from {
        return Err(OgcError::Mismatch);
    }
    if h1.is_identity() {
        return Ok(h2.clone());
    }
    if h2.is_identity() {
        return Ok(h1.clone());
    }
    let half = |s: &Segment, off: f64| Segment { kind: s.kind, start: off + 0.5 * s.start, end: off + 0.5 * s.end };
    let segments = h1.segments.iter().map(|s| half(s, 0.0)).chain(h2.segments.iter().map(|s| half(s, 0.5))).collect();
    Ok(Transition { from: h1.from, to: h2.to, segments })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChordResult {
    pub curve: DiscreteCurve,
    pub energy: f64,
    pub length: f64,
    pub geodesic_residual: f64,
    pub orthogonality_defect: f64,
    pub is_wogc: bool,
    pub boundary_points: (Vec<f64>, Vec<f64>),
    pub seed: (usize, usize),
    pub level: f64,
}

#[derive(Debug, Clone)]
pub struct DeformationOptions {
    pub max_iters: usize,
    /// Residual below which the top curve is polished and tested.
    pub polish_trigger: f64,
    pub polish_n: usize,
    pub deadline: Option<Instant>,
}

impl Default for DeformationOptions {
    fn default() -> Self {
        DeformationOptions { max_iters: 400, polish_trigger: 0.1, polish_n: 128, deadline: None }
    }
}

#[derive(Debug, Clone)]
pub enum DeformationOutcome {
    Lowered { state: HomotopyState, transition: Transition },
    Ogc { state: HomotopyState, transition: Transition, chord: ChordResult },
}

/// One seed update: C, then B, then A.
fn advance_seed(x: &DiscreteCurve, tau: f64, spec: &DomainSpec, ledger: &ConstantsLedger) -> Option<FlowStepResult> {
    if let Ok(r) = type_c_step(x, spec, ledger) {
        if r.accepted && r.displacement_h1 > 0.0 {
            return Some(r);
        }
    }
    if let Ok(r) = type_b_step(x, spec, ledger) {
        return Some(r);
    }
    match type_a_step(x, spec, ledger, tau) {
        Ok(r) if r.accepted && r.f_after < r.f_before => Some(r),
        _ => None,
    }
}

/// Polishes the arg-max interval of seed k and tests it as a chord.
fn try_chord(state: &HomotopyState, k: usize, spec: &DomainSpec, opts: &DeformationOptions) -> Option<ChordResult> {
    let x = &state.curves[k];
    let v = curve_functional(x, spec).ok()?;
    let iv = &v.intervals[v.argmax?];
    if residual_vplus(x, spec, iv.a, iv.b).ok()? >= opts.polish_trigger {
        return None;
    }
    let y = polish_chord(x, spec, iv.a, iv.b, opts.polish_n).ok()?;
    let check = is_ogc(&y, spec, 0.0, 1.0).ok()?;
    if !check.ok || check.is_wogc || residual_vplus(&y, spec, 0.0, 1.0).ok()? >= crate::criticality::CRITICAL_THRESHOLD {
        return None;
    }
    Some(chord_result(y, spec, check, state.pairs[k], state.values[k]))
}

fn chord_result(y: DiscreteCurve, spec: &DomainSpec, check: OgcCheck, seed: (usize, usize), level: f64) -> ChordResult {
    let n = y.n();
    ChordResult {
        energy: energy_unchecked(&y, &spec.field, 0.0, 1.0),
        length: length(&y, &spec.field, 0.0, 1.0),
        geodesic_residual: check.geodesic_residual,
        orthogonality_defect: check.orthogonality_defect,
        is_wogc: check.is_wogc,
        boundary_points: (y.node(0).to_vec(), y.node(n).to_vec()),
        curve: y,
        seed,
        level,
    }
}

/// Deforms the band {F > c − ε} with C → B → A steps until the sup drops
/// below c − ε, or the top curve turns out to be a chord.
pub fn first_deformation(
    state: &HomotopyState,
    spec: &DomainSpec,
    ledger: &ConstantsLedger,
    c: f64,
    eps: f64,
    opts: &DeformationOptions,
) -> Result<DeformationOutcome> {
    if !(eps > 0.0) || !c.is_finite() {
        return Err(OgcError::InvalidInput(format!("level {c} and eps {eps} must be finite with eps > 0")));
    }
    let from = state.fingerprint();
    let mut st = state.clone();
    let mut tags = Vec::new();
    for _ in 0..opts.max_iters {
        let f = st.functional();
        if f <= c - eps {
            let to = st.fingerprint();
            return Ok(DeformationOutcome::Lowered { transition: Transition::from_tags(from, to, &tags), state: st });
        }
        if let Some(top) = st.argmax() {
            if let Some(chord) = try_chord(&st, top, spec, opts) {
                let to = st.fingerprint();
                return Ok(DeformationOutcome::Ogc { transition: Transition::from_tags(from, to, &tags), state: st, chord });
            }
        }
        if opts.deadline.is_some_and(|d| Instant::now() > d) {
            break;
        }
        let band: Vec<usize> = (0..st.curves.len()).filter(|&k| !st.retired[k] && st.values[k] > c - eps).collect();
        let results: Vec<(usize, Option<FlowStepResult>)> =
            band.par_iter().map(|&k| (k, advance_seed(&st.curves[k], st.step[k], spec, ledger))).collect();
        let mut moved = false;
        let mut kinds = [false; 3];
        let mut disp: f64 = 0.0;
        for (k, r) in results {
            let Some(r) = r else {
                st.step[k] *= 0.25;
                continue;
            };
            if r.step_kind == StepKind::A {
                st.step[k] = if r.tau >= st.step[k] { (2.0 * r.tau).min(ledger.t_eps) } else { r.tau };
            }
            kinds[r.step_kind as usize] = true;
            disp = disp.max(r.displacement_h1);
            moved |= r.f_after < r.f_before || r.step_kind == StepKind::C;
            st.values[k] = r.f_after;
            st.curves[k] = r.curve;
        }
        if !moved {
            let (residual, _) = top_diagnostics(&st, spec);
            return Err(OgcError::Stalled { level: st.functional(), residual });
        }
        st.iter += 1;
        for (kind, on) in [StepKind::C, StepKind::B, StepKind::A].into_iter().zip([kinds[2], kinds[1], kinds[0]]) {
            if on {
                tags.push(kind);
                st.tag_log.push(kind);
                st.trace.push(TraceRow {
                    iter: st.iter,
                    step_kind: kind,
                    f: st.functional(),
                    residual: f64::NAN,
                    displacement: disp,
                    cusps: 0,
                });
            }
        }
        let (residual, cusps) = top_diagnostics(&st, spec);
        if let Some(row) = st.trace.last_mut() {
            row.residual = residual;
            row.cusps = cusps;
        }
    }
    let (residual, _) = top_diagnostics(&st, spec);
    Err(OgcError::Stalled { level: st.functional(), residual })
}

/// Residual and cusp count of the arg-max portion of the top seed.
fn top_diagnostics(st: &HomotopyState, spec: &DomainSpec) -> (f64, usize) {
    let Some(k) = st.argmax() else { return (f64::NAN, 0) };
    let x = &st.curves[k];
    let Ok(v) = curve_functional(x, spec) else { return (f64::NAN, 0) };
    let Some(a) = v.argmax else { return (f64::NAN, 0) };
    let iv = &v.intervals[a];
    let residual = residual_vplus(x, spec, iv.a, iv.b).unwrap_or(f64::NAN);
    let cusps = crate::criticality::classify_portion(x, spec, iv.a, iv.b).map_or(0, |r| r.cusps.len());
    (residual, cusps)
}

/// Newton's method on the discrete KKT system of f on [0, 1] with both
/// endpoints constrained to φ = 0, started from the uniform resample of x on [a, b].
pub fn polish_chord(x: &DiscreteCurve, spec: &DomainSpec, a: f64, b: f64, n: usize) -> Result<DiscreteCurve> {
    let y0 = restrict_resample(x, a, b, n);
    let dim = y0.dim();
    let nv = (n + 1) * dim;
    let kkt = |z: &[f64]| -> Vec<f64> {
        let chain = Chain::from_curve(&DiscreteCurve::from_flat(dim, z[..nv].to_vec()));
        let mut r = chain.gradient(&spec.field);
        let (p0, pn) = (&z[..dim], &z[n * dim..nv]);
        let (d0, dn) = (spec.dphi(p0), spec.dphi(pn));
        for i in 0..dim {
            r[i] -= z[nv] * d0[i];
            r[n * dim + i] -= z[nv + 1] * dn[i];
        }
        r.push(spec.phi(p0));
        r.push(spec.phi(pn));
        r
    };
    let mut z = y0.coords().to_vec();
    {
        let g = Chain::from_curve(&y0).gradient(&spec.field);
        let (d0, dn) = (spec.dphi(y0.node(0)), spec.dphi(y0.node(n)));
        z.push(crate::geometry::dot(&g[..dim], &d0) / crate::geometry::dot(&d0, &d0));
        z.push(crate::geometry::dot(&g[n * dim..], &dn) / crate::geometry::dot(&dn, &dn));
    }
    let m = z.len();
    let mut res = kkt(&z);
    let rnorm = |r: &[f64]| r.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    for _ in 0..40 {
        if rnorm(&res) < 1e-13 {
            break;
        }
        let mut jac = DMatrix::zeros(m, m);
        for j in 0..m {
            let e = 1e-6 * (1.0 + z[j].abs());
            let mut zp = z.clone();
            zp[j] += e;
            let rp = kkt(&zp);
            zp[j] -= 2.0 * e;
            let rm = kkt(&zp);
            for i in 0..m {
                jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * e);
            }
        }
        let dz = jac
            .lu()
            .solve(&DVector::from_iterator(m, res.iter().map(|v| -v)))
            .ok_or_else(|| OgcError::NoConvergence("singular KKT matrix".into()))?;
        let mut t = 1.0;
        let base = rnorm(&res);
        loop {
            let trial: Vec<f64> = z.iter().zip(dz.iter()).map(|(a, b)| a + t * b).collect();
            let valid = trial[..nv].chunks(dim).all(|p| spec.field.is_valid_point(p));
            if valid {
                let r = kkt(&trial);
                if rnorm(&r) < base || t < 1e-3 {
                    z = trial;
                    res = r;
                    break;
                }
            }
            t *= 0.5;
            if t < 1e-4 {
                return Err(OgcError::NoConvergence("polish line search failed".into()));
            }
        }
    }
    if rnorm(&res) > 1e-9 {
        return Err(OgcError::NoConvergence(format!("KKT residual {:e}", rnorm(&res))));
    }
    let y = DiscreteCurve::from_flat(dim, z[..nv].to_vec());
    let drift = y.nodes().zip(y0.nodes()).map(|(p, q)| dist(p, q)).fold(0.0, f64::max);
    let scale = y0.nodes().map(|p| dist(p, y0.node(0))).fold(0.0, f64::max);
    if drift > 0.25 * scale {
        return Err(OgcError::NoConvergence(format!("polished chord drifted by {drift}")));
    }
    Ok(y)
}

/// Symmetric Hausdorff distance between node sets.
pub fn hausdorff(x: &DiscreteCurve, y: &DiscreteCurve) -> f64 {
    let one = |p: &DiscreteCurve, q: &DiscreteCurve| {
        p.nodes().map(|a| q.nodes().map(|b| dist(a, b)).fold(f64::INFINITY, f64::min)).fold(0.0, f64::max)
    };
    one(x, y).max(one(y, x))
}

/// One representative per energy cluster of width `tol`; same-cluster chords
/// survive separately only when their images differ by more than `shape_tol`.
pub fn dedup_chords(mut results: Vec<ChordResult>, tol: f64, shape_tol: f64) -> Vec<ChordResult> {
    results.sort_by(|a, b| a.energy.total_cmp(&b.energy));
    let mut kept: Vec<ChordResult> = Vec::new();
    for r in results {
        let dup = kept.iter().any(|k| (k.energy - r.energy).abs() <= tol && hausdorff(&k.curve, &r.curve) <= shape_tol);
        if !dup {
            kept.push(r);
        }
    }
    kept
}

#[derive(Debug, Clone, Serialize)]
pub struct WogcReport {
    pub point: Vec<f64>,
    pub defect_start: f64,
    pub defect_end: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct WogcScan {
    pub samples: usize,
    pub escaped: usize,
    pub min_defect: f64,
    pub flagged: Vec<WogcReport>,
}

/// Tangential boundary touching points whose geodesic meets ∂Ω orthogonally
/// on both sides; geodesics that never reach ∂Ω are skipped.
pub fn wogc_scan(spec: &DomainSpec, samples: usize, seed: u64, tol: f64) -> WogcScan {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = sample_boundary(spec, samples, &mut rng);
    let mut scan = WogcScan { samples: pts.len(), escaped: 0, min_defect: f64::INFINITY, flagged: Vec::new() };
    if spec.dim() != 2 {
        return scan;
    }
    for p in &pts {
        let d = spec.dphi(p);
        let t = [-d[1], d[0]];
        let s = spec.field.norm_at(p, &t);
        if !(s > 0.0) {
            continue;
        }
        let t = [t[0] / s, t[1] / s];
        let hit = |v: [f64; 2]| -> Option<f64> {
            let traj = integrate_geodesic(&spec.field, p, &v, 20.0, 0.01).or_else(|e| match e {
                OgcError::LeftChart { t } if t > 0.0 => integrate_geodesic(&spec.field, p, &v, t, 0.01),
                e => Err(e),
            });
            let traj = traj.ok()?;
            // Skip the grazing start, then look for the first φ sign change into the exterior.
            let k0 = traj.points.iter().position(|q| spec.phi(q) < -1e-6)?;
            let k = (k0..traj.points.len()).find(|&k| spec.phi(&traj.points[k]) >= 0.0)?;
            let (q, w) = (&traj.points[k], &traj.velocities[k]);
            let gn = spec.grad_phi(q);
            let c = spec.field.inner(q, &gn, w) / (spec.field.norm_at(q, &gn) * spec.field.norm_at(q, w));
            Some((1.0 - c * c).max(0.0).sqrt())
        };
        let (Some(d1), Some(d2)) = (hit(t), hit([-t[0], -t[1]])) else { continue };
        scan.escaped += 1;
        scan.min_defect = scan.min_defect.min(d1.max(d2));
        if d1 < tol && d2 < tol {
            scan.flagged.push(WogcReport { point: p.clone(), defect_start: d1, defect_end: d2 });
        }
    }
    scan
}

/// Checks on a state before it is used as the start of a minimax sweep:
/// seeds over equal boundary points are constant, and no curve has a
/// shallow boundary-hugging cusp.
pub fn admission_h1(state: &HomotopyState, spec: &DomainSpec, ledger: &ConstantsLedger) -> Result<bool> {
    for (k, &(i, j)) in state.pairs.iter().enumerate() {
        let c = &state.curves[k];
        if i == j && !c.is_constant(1e-12) {
            return Ok(false);
        }
        if i != j && !find_nonessential_intervals(c, spec, &ledger.proximity())?.is_empty() {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub n: usize,
    pub grid: usize,
    pub seed: u64,
    pub overrides: LedgerOverrides,
    pub max_chords: usize,
    pub max_outer: usize,
    pub deformation: DeformationOptions,
    pub energy_tol: f64,
    pub shape_tol: f64,
    pub concavity_samples: usize,
    pub time_budget: Option<Duration>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            n: 128,
            grid: 32,
            seed: 0,
            overrides: LedgerOverrides::default(),
            max_chords: 1,
            max_outer: 200,
            deformation: DeformationOptions::default(),
            energy_tol: 1e-3,
            shape_tol: f64::INFINITY,
            concavity_samples: 200,
            time_budget: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub chords: Vec<ChordResult>,
    pub ledger: ConstantsLedger,
    pub trace: Vec<TraceRow>,
    pub wogc: WogcScan,
    pub admitted: bool,
    /// ½(3δ₀/(4K₀))².
    pub level_bound: f64,
    pub level_bound_ok: bool,
    pub levels: Vec<f64>,
    pub stalled: bool,
}

/// Everything a solve needs before the first deformation.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub spec: DomainSpec,
    pub concavity: ConcavityReport,
    pub family: PathFamily,
    pub ledger: ConstantsLedger,
    pub wogc: WogcScan,
}

/// Concavity gate, δ₀ and K₀, seed family, constants ledger and WOGC scan.
pub fn prepare(spec: &DomainSpec, opts: &SolveOptions) -> Result<Prepared> {
    let concavity = check_strong_concavity(spec, opts.concavity_samples);
    if !concavity.is_strongly_concave {
        let w = concavity
            .witnesses
            .first()
            .map(|w| format!("witness at {:?} with Hessian value {:e}", w.point, w.hess_value))
            .unwrap_or_else(|| "no boundary samples".into());
        return Err(OgcError::NotConcave(w));
    }
    let mut spec = spec.clone();
    if spec.delta0.is_none() {
        spec = spec.with_delta0(concavity.delta0);
    }
    if spec.k0.is_none() {
        let k0 = compute_k0(&spec, 2000, opts.seed)?;
        spec = spec.with_k0(k0);
    }
    let grid = boundary_grid(&spec, opts.grid, opts.seed)?;
    let gen = GeneratorOptions::for_spec(&spec, opts.n, opts.seed)?;
    let family = PathFamily::build(&spec, grid, &gen)?;
    let ledger = ConstantsLedger::assemble(&spec, family.m0, opts.seed, &opts.overrides)?;
    let wogc = wogc_scan(&spec, 64, opts.seed, 1e-2);
    Ok(Prepared { spec, concavity, family, ledger, wogc })
}

/// Minimal level and chords of the family of seed curves over a boundary grid.
pub fn solve_existence(spec: &DomainSpec, opts: &SolveOptions) -> Result<SolveReport> {
    let start = Instant::now();
    let Prepared { spec, family, ledger, wogc, .. } = prepare(spec, opts)?;
    let mut state = HomotopyState::from_family(&family, &spec)?;
    let admitted = admission_h1(&state, &spec, &ledger)?;

    let mut dopts = opts.deformation.clone();
    dopts.polish_n = opts.n;
    if let Some(b) = opts.time_budget {
        dopts.deadline = Some(start + b);
    }
    let floor = 1e-6 * ledger.m0;
    let mut eps = 0.05 * ledger.m0;
    let mut chords: Vec<ChordResult> = Vec::new();
    let mut levels = vec![state.functional()];
    let mut stalled = false;
    let mut last_residual = f64::NAN;
    let mut trace = Vec::new();
    for _ in 0..opts.max_outer {
        if state.argmax().is_none() {
            break;
        }
        let c = state.functional();
        match first_deformation(&state, &spec, &ledger, c, eps, &dopts) {
            Ok(DeformationOutcome::Lowered { state: s, .. }) => {
                state = s;
                trace.append(&mut state.trace);
                levels.push(state.functional());
            }
            Ok(DeformationOutcome::Ogc { state: s, chord, .. }) => {
                state = s;
                trace.append(&mut state.trace);
                retire_near(&mut state, &spec, &chord);
                chords.push(chord);
                chords = dedup_chords(chords, opts.energy_tol, opts.shape_tol);
                if chords.len() >= opts.max_chords {
                    break;
                }
            }
            Err(OgcError::Stalled { residual, .. }) => {
                last_residual = residual;
                trace.append(&mut state.trace);
                eps *= 0.5;
                if eps < floor {
                    stalled = true;
                    break;
                }
            }
            Err(e) => return Err(e),
        }
        if dopts.deadline.is_some_and(|d| Instant::now() > d) {
            stalled = chords.is_empty();
            break;
        }
    }
    if chords.is_empty() {
        if stalled {
            return Err(OgcError::Stalled { level: state.functional(), residual: last_residual });
        }
        return Err(OgcError::NoConvergence("outer iteration budget exhausted".into()));
    }
    let level_bound = ledger.c1_lower_bound;
    let min_level = chords.iter().map(|c| c.energy).fold(f64::INFINITY, f64::min);
    Ok(SolveReport { chords, level_bound, level_bound_ok: min_level >= level_bound, ledger, trace, wogc, admitted, levels, stalled })
}

/// Retires every active seed whose top portion lies within a small
/// Hausdorff distance of the chord.
fn retire_near(state: &mut HomotopyState, spec: &DomainSpec, chord: &ChordResult) {
    let scale = chord.curve.nodes().map(norm).fold(0.0, f64::max).max(1.0);
    let thin = DiscreteCurve::from_fn(chord.curve.dim(), 32, |s| chord.curve.eval(s));
    let near: Vec<bool> = state
        .curves
        .par_iter()
        .enumerate()
        .map(|(k, x)| {
            if state.retired[k] || state.values[k] < 0.5 * chord.energy {
                return false;
            }
            let Ok(v) = curve_functional(x, spec) else { return false };
            let Some(a) = v.argmax else { return false };
            let iv = &v.intervals[a];
            let y = restrict_resample(x, iv.a, iv.b, 32);
            hausdorff(&y, &thin) < 0.05 * scale
        })
        .collect();
    for (k, r) in near.into_iter().enumerate() {
        state.retired[k] |= r;
    }
}
