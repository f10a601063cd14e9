//! Discrete curves on [0,1], their norms and energies, maximal intervals,
//! reversal, the chord generator G(A,B) and the path family with its bound M₀.

use rayon::prelude::*;
use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

use crate::domain::{eta, sample_sublevel, DomainSpec, BOUNDARY_TOL};
use crate::error::{OgcError, Result};
use crate::geometry::{
    dist, injectivity_radius_lower_bound, minimal_geodesic_steps, norm, straight_length, InjectivityOptions, MetricField,
};

/// φ tolerance used to classify nodes as on the boundary.
pub const INTERVAL_TOL: f64 = 1e-7;

/// Polyline on the uniform grid s_i = i/n, stored as a flat coordinate array.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteCurve {
    dim: usize,
    n: usize,
    coords: Vec<f64>,
}

impl DiscreteCurve {
    pub fn from_flat(dim: usize, coords: Vec<f64>) -> Self {
        assert!(dim > 0 && coords.len() % dim == 0 && coords.len() >= 2 * dim, "bad curve layout");
        let n = coords.len() / dim - 1;
        DiscreteCurve { dim, n, coords }
    }

    pub fn from_nodes(nodes: &[Vec<f64>]) -> Self {
        let dim = nodes[0].len();
        DiscreteCurve::from_flat(dim, nodes.iter().flatten().copied().collect())
    }

    pub fn constant(p: &[f64], n: usize) -> Self {
        DiscreteCurve::from_flat(p.len(), p.iter().copied().cycle().take(p.len() * (n + 1)).collect())
    }

    /// Affine segment from `p` to `q`.
    pub fn segment(p: &[f64], q: &[f64], n: usize) -> Self {
        DiscreteCurve::from_fn(p.len(), n, |s| p.iter().zip(q).map(|(a, b)| a + s * (b - a)).collect())
    }

    pub fn from_fn(dim: usize, n: usize, f: impl Fn(f64) -> Vec<f64>) -> Self {
        let mut coords = Vec::with_capacity(dim * (n + 1));
        for i in 0..=n {
            coords.extend(f(i as f64 / n as f64));
        }
        DiscreteCurve::from_flat(dim, coords)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn node(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn node_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.coords
    }

    pub fn nodes(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks(self.dim)
    }

    #[inline]
    pub fn param(&self, i: usize) -> f64 {
        i as f64 / self.n as f64
    }

    /// Node difference x_{k+1} − x_k.
    pub fn delta(&self, k: usize) -> Vec<f64> {
        let (a, b) = (self.node(k), self.node(k + 1));
        b.iter().zip(a).map(|(x, y)| x - y).collect()
    }

    /// Piecewise-constant derivative on cell k.
    pub fn velocity(&self, k: usize) -> Vec<f64> {
        let n = self.n as f64;
        self.delta(k).into_iter().map(|d| d * n).collect()
    }

    /// Linear interpolation at s ∈ [0,1].
    pub fn eval(&self, s: f64) -> Vec<f64> {
        let t = (s.clamp(0.0, 1.0) * self.n as f64).min(self.n as f64);
        let k = (t.floor() as usize).min(self.n - 1);
        let w = t - k as f64;
        let (a, b) = (self.node(k), self.node(k + 1));
        a.iter().zip(b).map(|(x, y)| x + w * (y - x)).collect()
    }

    pub fn is_constant(&self, tol: f64) -> bool {
        let p = self.node(0);
        self.nodes().all(|q| dist(p, q) <= tol)
    }
}

impl Serialize for DiscreteCurve {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.coords.len() + 1))?;
        seq.serialize_element(&(self.n as f64))?;
        for c in &self.coords {
            seq.serialize_element(c)?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for DiscreteCurve {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct CurveVisitor;
        impl<'de> Visitor<'de> for CurveVisitor {
            type Value = DiscreteCurve;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("an array [n, coords...]")
            }
            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> std::result::Result<DiscreteCurve, A::Error> {
                let n: f64 = seq.next_element()?.ok_or_else(|| de::Error::invalid_length(0, &self))?;
                let mut coords = Vec::new();
                while let Some(c) = seq.next_element::<f64>()? {
                    coords.push(c);
                }
                let nodes = n as usize + 1;
                if n < 1.0 || n.fract() != 0.0 || coords.is_empty() || coords.len() % nodes != 0 {
                    return Err(de::Error::custom("coordinate count does not match n"));
                }
                Ok(DiscreteCurve::from_flat(coords.len() / nodes, coords))
            }
        }
        deserializer.deserialize_seq(CurveVisitor)
    }
}

/// Iterates the cells meeting [a, b] as (k, lo, hi) with lo < hi.
pub(crate) fn cells(n: usize, a: f64, b: f64) -> impl Iterator<Item = (usize, f64, f64)> {
    let nf = n as f64;
    let k0 = ((a * nf + 1e-9).floor().max(0.0) as usize).min(n.saturating_sub(1));
    let k1 = ((b * nf - 1e-9).ceil().max(1.0) as usize).min(n);
    (k0..k1).filter_map(move |k| {
        let lo = a.max(k as f64 / nf);
        let hi = b.min((k + 1) as f64 / nf);
        (hi - lo > 1e-15).then_some((k, lo, hi))
    })
}

fn check_interval(a: f64, b: f64) -> Result<()> {
    if !(a < b) || a < -1e-12 || b > 1.0 + 1e-12 {
        return Err(OgcError::EmptyInterval { a, b });
    }
    Ok(())
}

/// (1/√2)(max(‖x(a)‖², ‖x(b)‖²) + ∫_a^b ‖ẋ‖²)^{1/2}, chart-Euclidean.
pub fn h1_norm(x: &DiscreteCurve, a: f64, b: f64) -> Result<f64> {
    check_interval(a, b)?;
    let nf = x.n as f64;
    let mut integral = 0.0;
    for (k, lo, hi) in cells(x.n, a, b) {
        let d = x.delta(k);
        integral += (hi - lo) * nf * nf * d.iter().map(|v| v * v).sum::<f64>();
    }
    let ea = norm(&x.eval(a)).powi(2);
    let eb = norm(&x.eval(b)).powi(2);
    Ok(((ea.max(eb) + integral) / 2.0).sqrt())
}

/// H¹ norm of the node-wise difference of two curves on [0, 1].
pub fn h1_distance(x: &DiscreteCurve, y: &DiscreteCurve) -> f64 {
    let diff = DiscreteCurve::from_flat(x.dim, x.coords.iter().zip(&y.coords).map(|(p, q)| p - q).collect());
    h1_norm(&diff, 0.0, 1.0).unwrap_or(f64::NAN)
}

/// f_{a,b}(x) = ½ ∫_a^b g(ẋ, ẋ), midpoint metric per (partial) cell.
pub fn energy(x: &DiscreteCurve, field: &MetricField, a: f64, b: f64) -> Result<f64> {
    check_interval(a, b)?;
    Ok(energy_unchecked(x, field, a, b))
}

pub(crate) fn energy_unchecked(x: &DiscreteCurve, field: &MetricField, a: f64, b: f64) -> f64 {
    let nf = x.n as f64;
    let mut e = 0.0;
    for (k, lo, hi) in cells(x.n, a, b) {
        let d = x.delta(k);
        let mid = x.eval(0.5 * (lo + hi));
        e += 0.5 * (hi - lo) * nf * nf * field.quad(&mid, &d);
    }
    e
}

/// Riemannian length of the polyline on [a, b].
pub fn length(x: &DiscreteCurve, field: &MetricField, a: f64, b: f64) -> f64 {
    let nf = x.n as f64;
    cells(x.n, a, b)
        .map(|(k, lo, hi)| {
            let d = x.delta(k);
            (hi - lo) * nf * field.norm_at(&x.eval(0.5 * (lo + hi)), &d)
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalKind {
    Maximal,
    Sub,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalRecord {
    pub a: f64,
    pub b: f64,
    pub kind: IntervalKind,
    pub a_on_boundary: bool,
    pub b_on_boundary: bool,
    /// First and last node index of the run of nodes with φ ≤ tol.
    pub run: (usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NodeClass {
    Out,
    On,
    In,
}

fn classify(phi: f64) -> NodeClass {
    if phi > INTERVAL_TOL {
        NodeClass::Out
    } else if phi >= -INTERVAL_TOL {
        NodeClass::On
    } else {
        NodeClass::In
    }
}

/// Parameter of the φ = 0 crossing on cell (k, k+1), by bisection on the segment.
fn crossing(x: &DiscreteCurve, spec: &DomainSpec, k: usize, inside_at_start: bool) -> f64 {
    let (p, q) = (x.node(k), x.node(k + 1));
    let at = |t: f64| -> f64 {
        let y: Vec<f64> = p.iter().zip(q).map(|(a, b)| a + t * (b - a)).collect();
        spec.phi(&y)
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        if (at(mid) <= 0.0) == inside_at_start {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (k as f64 + 0.5 * (lo + hi)) / x.n as f64
}

/// Maximal intervals: runs of nodes with φ ≤ tol, extended to the exact
/// boundary crossing on the adjoining cells.
pub fn maximal_intervals(x: &DiscreteCurve, spec: &DomainSpec) -> Result<Vec<IntervalRecord>> {
    let phis: Vec<f64> = x.nodes().map(|p| spec.phi(p)).collect();
    maximal_intervals_from(x, spec, &phis)
}

pub(crate) fn maximal_intervals_from(x: &DiscreteCurve, spec: &DomainSpec, phis: &[f64]) -> Result<Vec<IntervalRecord>> {
    let n = x.n;
    if phis[0] < -INTERVAL_TOL || phis[n] < -INTERVAL_TOL {
        return Err(OgcError::NotInM0);
    }
    let class: Vec<NodeClass> = phis.iter().map(|&p| classify(p)).collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i <= n {
        if class[i] == NodeClass::Out {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && class[i + 1] != NodeClass::Out {
            i += 1;
        }
        let end = i;
        i += 1;
        let a = if class[start] == NodeClass::On { x.param(start) } else { crossing(x, spec, start - 1, false) };
        let b = if class[end] == NodeClass::On { x.param(end) } else { crossing(x, spec, end, true) };
        if b > a {
            out.push(IntervalRecord { a, b, kind: IntervalKind::Maximal, a_on_boundary: true, b_on_boundary: true, run: (start, end) });
        }
    }
    Ok(out)
}

/// ℛx(s) = x(1 − s).
pub fn reverse(x: &DiscreteCurve) -> DiscreteCurve {
    let mut coords = Vec::with_capacity(x.coords.len());
    for i in (0..=x.n).rev() {
        coords.extend_from_slice(x.node(i));
    }
    DiscreteCurve { dim: x.dim, n: x.n, coords }
}

/// x restricted to [a, b], affinely reparameterized onto `n` uniform cells.
pub fn restrict_resample(x: &DiscreteCurve, a: f64, b: f64, n: usize) -> DiscreteCurve {
    DiscreteCurve::from_fn(x.dim, n, |s| x.eval(a + s * (b - a)))
}

/// Boundary radius along the ray `center + r·dir`.
pub fn boundary_radius(spec: &DomainSpec, dir: &[f64]) -> Result<f64> {
    let c = &spec.center;
    let at = |r: f64| -> f64 {
        let p: Vec<f64> = c.iter().zip(dir).map(|(a, b)| a + r * b).collect();
        spec.phi(&p)
    };
    if !(at(0.0) < 0.0) {
        return Err(OgcError::PreconditionUnmet("domain center must be inside".into()));
    }
    let mut lo = 0.0;
    let mut hi = 1e-3;
    let mut found = false;
    for _ in 0..80 {
        if at(hi) > 0.0 {
            found = true;
            break;
        }
        lo = hi;
        hi *= 1.5;
    }
    if !found {
        return Err(OgcError::DegenerateRegion("ray from the center never reaches the boundary".into()));
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if at(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-16 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Boundary points on evenly spaced rays (2D) or seeded random rays.
pub fn boundary_grid(spec: &DomainSpec, m: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    use rand::{Rng, SeedableRng};
    let n = spec.dim();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..m)
        .map(|k| {
            let dir: Vec<f64> = if n == 2 {
                let th = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
                vec![th.cos(), th.sin()]
            } else {
                let v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
                let nv = norm(&v);
                v.into_iter().map(|x| x / nv).collect()
            };
            let r = boundary_radius(spec, &dir)?;
            Ok(spec.center.iter().zip(&dir).map(|(c, d)| c + r * d).collect())
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct GeneratorOptions {
    pub n: usize,
    pub inj_bound: f64,
    pub min_pieces: usize,
}

impl GeneratorOptions {
    /// Sizes the generator from a sampled injectivity bound over {φ ≤ δ₀}.
    pub fn for_spec(spec: &DomainSpec, n: usize, seed: u64) -> Result<Self> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let region = sample_sublevel(spec, spec.shell(), 64, &mut rng);
        let inj = injectivity_radius_lower_bound(&spec.field, &region, &InjectivityOptions { seed, ..Default::default() })?;
        Ok(GeneratorOptions { n, inj_bound: inj, min_pieces: 4 })
    }
}

fn lex_greater(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x != y {
            return x > y;
        }
    }
    false
}

/// Radial normalization ψ⁻¹ of the unit ball onto the domain.
fn psi_inv(spec: &DomainSpec, y: &[f64]) -> Result<Vec<f64>> {
    let r = norm(y);
    if r < 1e-15 {
        return Ok(spec.center.clone());
    }
    let dir: Vec<f64> = y.iter().map(|v| v / r).collect();
    let rb = boundary_radius(spec, &dir)?;
    Ok(spec.center.iter().zip(y).map(|(c, v)| c + rb * v).collect())
}

/// The seed curve G(A, B): broken geodesic through the image of a straight
/// segment, clamped into the closed domain and pushed off the boundary.
pub fn chord_generator(spec: &DomainSpec, a: &[f64], b: &[f64], opts: &GeneratorOptions) -> Result<DiscreteCurve> {
    for p in [a, b] {
        let phi = spec.phi(p);
        if phi.abs() > BOUNDARY_TOL {
            return Err(OgcError::NotOnBoundary { phi });
        }
    }
    let n = opts.n;
    if dist(a, b) <= 1e-14 {
        return Ok(DiscreteCurve::constant(a, n));
    }
    if lex_greater(a, b) {
        return Ok(reverse(&chord_generator(spec, b, a, opts)?));
    }
    let delta0 = spec.delta0.ok_or_else(|| OgcError::PreconditionUnmet("delta0 must be set before generating chords".into()))?;
    let unit = |p: &[f64]| -> Vec<f64> {
        let d: Vec<f64> = p.iter().zip(&spec.center).map(|(x, c)| x - c).collect();
        let r = norm(&d);
        d.into_iter().map(|v| v / r).collect()
    };
    let (ya, yb) = (unit(a), unit(b));
    let c_ab = |s: f64| -> Result<Vec<f64>> {
        let y: Vec<f64> = ya.iter().zip(&yb).map(|(p, q)| (1.0 - s) * p + s * q).collect();
        psi_inv(spec, &y)
    };
    let mut pieces = opts.min_pieces.max(1).min(n);
    let nodes = loop {
        let pts: Vec<Vec<f64>> = (0..=pieces)
            .map(|k| {
                if k == 0 {
                    Ok(a.to_vec())
                } else if k == pieces {
                    Ok(b.to_vec())
                } else {
                    c_ab(k as f64 / pieces as f64)
                }
            })
            .collect::<Result<_>>()?;
        let too_long = pts.windows(2).any(|w| straight_length(&spec.field, &w[0], &w[1]) > 0.8 * opts.inj_bound);
        if too_long && pieces < n {
            pieces *= 2;
            continue;
        }
        let per = n / pieces;
        let built: Option<Vec<Vec<f64>>> = if per <= 1 {
            Some(pts.clone())
        } else {
            let sub = per * 64_usize.div_ceil(per);
            let mut all = Vec::with_capacity(n + 1);
            let mut ok = true;
            for w in pts.windows(2) {
                match minimal_geodesic_steps(&spec.field, &w[0], &w[1], f64::INFINITY, sub) {
                    Ok(t) => {
                        let stride = sub / per;
                        for j in 0..per {
                            all.push(t.points[j * stride].clone());
                        }
                    }
                    Err(_) => {
                        ok = false;
                        break;
                    }
                }
            }
            all.push(b.to_vec());
            ok.then_some(all)
        };
        match built {
            Some(nodes) if nodes.iter().all(|p| spec.phi(p) <= 0.9 * delta0) || pieces >= n => break nodes,
            _ if pieces < n => pieces *= 2,
            _ => break pts,
        }
    };
    let mut x = DiscreteCurve::from_nodes(&nodes);
    let shell = spec.shell();
    for i in 1..n {
        let mut p = x.node(i).to_vec();
        let phi = spec.phi(&p);
        if phi > 0.0 {
            p = eta(spec, &p, -phi, shell)?;
        }
        let s = x.param(i);
        let push = s * (1.0 - s) * (0.5 * delta0 + spec.phi(&p)).max(0.0);
        if push > 0.0 {
            p = eta(spec, &p, -push, shell)?;
        }
        x.node_mut(i).copy_from_slice(&p);
    }
    x.node_mut(0).copy_from_slice(a);
    x.node_mut(n).copy_from_slice(b);
    Ok(x)
}

/// Seed curves for every boundary-grid pair, stored for i ≤ j.
#[derive(Debug, Clone)]
pub struct PathFamily {
    pub grid: Vec<Vec<f64>>,
    pub curves: Vec<DiscreteCurve>,
    pub m0: f64,
}

/// Position of the canonical pair (i, j), i ≤ j, among m grid points.
pub fn pair_index(m: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    // Rows r < i hold m − r entries each.
    i * m - i * i.saturating_sub(1) / 2 + (j - i)
}

/// All canonical pairs in storage order.
pub fn canonical_pairs(m: usize) -> Vec<(usize, usize)> {
    (0..m).flat_map(|i| (i..m).map(move |j| (i, j))).collect()
}

impl PathFamily {
    pub fn build(spec: &DomainSpec, grid: Vec<Vec<f64>>, opts: &GeneratorOptions) -> Result<PathFamily> {
        let pairs = canonical_pairs(grid.len());
        let curves: Vec<DiscreteCurve> =
            pairs.par_iter().map(|&(i, j)| chord_generator(spec, &grid[i], &grid[j], opts)).collect::<Result<_>>()?;
        let mut fam = PathFamily { grid, curves, m0: 0.0 };
        fam.m0 = compute_m0(&fam, &spec.field)?;
        Ok(fam)
    }

    pub fn from_curves(field: &MetricField, curves: Vec<DiscreteCurve>) -> Result<PathFamily> {
        let mut fam = PathFamily { grid: Vec::new(), curves, m0: 0.0 };
        fam.m0 = compute_m0(&fam, field)?;
        Ok(fam)
    }

    /// G(A_i, A_j), reversing the stored canonical curve when i > j.
    pub fn curve(&self, i: usize, j: usize) -> DiscreteCurve {
        let c = &self.curves[pair_index(self.grid.len(), i, j)];
        if i <= j {
            c.clone()
        } else {
            reverse(c)
        }
    }
}

/// max over the family of ∫₀¹ g(ẋ, ẋ).
pub fn compute_m0(family: &PathFamily, field: &MetricField) -> Result<f64> {
    if family.curves.is_empty() {
        return Err(OgcError::EmptyFamily);
    }
    Ok(family.curves.iter().map(|c| 2.0 * energy_unchecked(c, field, 0.0, 1.0)).fold(0.0, f64::max))
}

/// Whether every maximal interval has f_{a,b} < M₀.
pub fn in_m(x: &DiscreteCurve, spec: &DomainSpec, m0: f64) -> Result<bool> {
    let ivs = maximal_intervals(x, spec)?;
    Ok(ivs.iter().all(|iv| energy_unchecked(x, &spec.field, iv.a, iv.b) < m0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DepthTimeBound {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// b − a ≥ δ² / (K₀² ∫_a^b g(ẋ, ẋ)) for a portion starting on the boundary
/// and reaching depth δ.
pub fn depth_time_bound(x: &DiscreteCurve, spec: &DomainSpec, a: f64, b: f64, delta: f64, k0: f64) -> Result<DepthTimeBound> {
    check_interval(a, b)?;
    let pa = spec.phi(&x.eval(a));
    if pa.abs() > BOUNDARY_TOL {
        return Err(OgcError::PreconditionUnmet(format!("x(a) is not on the boundary (phi = {pa:e})")));
    }
    let deep = cells(x.n, a, b)
        .flat_map(|(k, _, _)| [k, k + 1])
        .filter(|&i| x.param(i) >= a - 1e-12 && x.param(i) <= b + 1e-12)
        .map(|i| spec.phi(x.node(i)))
        .chain([pa, spec.phi(&x.eval(b))])
        .any(|p| p <= -delta + 1e-12);
    if !deep {
        return Err(OgcError::PreconditionUnmet(format!("no point reaches depth {delta}")));
    }
    let integral = 2.0 * energy_unchecked(x, &spec.field, a, b);
    let rhs = if delta == 0.0 { 0.0 } else { delta * delta / (k0 * k0 * integral) };
    let lhs = b - a;
    Ok(DepthTimeBound { lhs, rhs, holds: lhs >= rhs - 1e-12 })
}
