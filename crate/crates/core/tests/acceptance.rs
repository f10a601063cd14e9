use std::f64::consts::{PI, SQRT_2};
use std::process::ExitCode;
use std::time::Instant;

use ogc_core::criticality::{bending_and_proximity, find_nonessential_intervals};
use ogc_core::domain::{check_strong_concavity, compute_k0, flow_eta, sample_boundary, sample_sublevel, DomainSpec, FlowDirection};
use ogc_core::flows::*;
use ogc_core::geometries::{euclidean_disk, half_plane, sphere_cap, CapPhi};
use ogc_core::geometry::{dist, dot};
use ogc_core::hamiltonian::{brake_orbits, jacobi_metric, NaturalHamiltonian, ShootingOptions};
use ogc_core::minimax::{solve_existence, ChordResult, SolveOptions, SolveReport};
use ogc_core::pathspace::{chord_generator, depth_time_bound, reverse, DiscreteCurve, GeneratorOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn cap() -> DomainSpec {
    sphere_cap(2.0 * PI / 3.0, CapPhi::Height).unwrap()
}

fn well() -> NaturalHamiltonian {
    NaturalHamiltonian::ellipsoid(&[1.0, SQRT_2], 1.0).unwrap()
}

/// Cap (two boundary functions) and the Jacobi well, with δ₀ and K₀ filled in.
fn geometries() -> Vec<(&'static str, DomainSpec)> {
    let raw = [
        ("cap/height", cap()),
        ("cap/distance", sphere_cap(2.0 * PI / 3.0, CapPhi::Distance).unwrap()),
        ("jacobi-well", jacobi_metric(&well(), 0.05).unwrap()),
    ];
    raw.into_iter()
        .map(|(name, spec)| {
            let d = check_strong_concavity(&spec, 200).delta0;
            let spec = spec.with_delta0(d);
            let k = compute_k0(&spec, 2000, 1).unwrap();
            (name, spec.with_k0(k))
        })
        .collect()
}

struct Runs {
    cap: SolveReport,
    cap_secs: f64,
    well: SolveReport,
}

fn chord_summary(c: &ChordResult) -> String {
    format!("L={:.6} E={:.6}", c.length, c.energy)
}

fn criterion_1(r: &Runs) -> Outcome {
    let target_l = 4.0 * PI / 3.0;
    let target_e = 8.0 * PI * PI / 9.0;
    let hit = r.cap.chords.iter().find(|c| (c.length - target_l).abs() < 1e-3 && (c.energy - target_e).abs() < 2e-3);
    let best = r.cap.chords.first().map(chord_summary).unwrap_or_else(|| "no chord".into());
    outcome(hit.is_some() && r.cap_secs < 60.0, format!("{best}, {:.1} s", r.cap_secs))
}

fn criterion_2(r: &Runs) -> Outcome {
    let all: Vec<&ChordResult> = r.cap.chords.iter().chain(&r.well.chords).collect();
    let worst_res = all.iter().map(|c| c.geodesic_residual).fold(0.0, f64::max);
    let worst_orth = all.iter().map(|c| c.orthogonality_defect).fold(0.0, f64::max);
    let wogc = all.iter().filter(|c| c.is_wogc).count();
    let pass = !all.is_empty() && worst_res < 1e-6 && worst_orth < 1e-4 && wogc == 0;
    outcome(pass, format!("{} chords, max residual {worst_res:.2e}, max orthogonality {worst_orth:.2e}, {wogc} weak", all.len()))
}

fn criterion_3(r: &Runs) -> Outcome {
    let line = |name: &str, rep: &SolveReport| {
        let min = rep.chords.iter().map(|c| c.energy).fold(f64::INFINITY, f64::min);
        (rep.level_bound_ok && min >= rep.level_bound, format!("{name} {min:.4} >= {:.3e}", rep.level_bound))
    };
    let (a, da) = line("cap", &r.cap);
    let (b, db) = line("well", &r.well);
    outcome(a && b, format!("{da}; {db}"))
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let solve = SolveOptions { max_chords: 2, ..Default::default() };
    let report = match brake_orbits(&well(), 0.05, &solve, &ShootingOptions::default()) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("pipeline failed: {e}")),
    };
    let secs = start.elapsed().as_secs_f64();
    let mut t: Vec<f64> = report.orbits.iter().map(|o| o.half_period).collect();
    t.sort_by(f64::total_cmp);
    let expect = [PI / 2.0, PI / SQRT_2];
    let periods_ok = t.len() == 2 && t.iter().zip(expect).all(|(a, b)| (a - b).abs() < 1e-4);
    let res = report.orbits.iter().map(|o| o.residual_p0.max(o.residual_pt)).fold(0.0, f64::max);
    let pass = periods_ok && res < 1e-6 && secs < 30.0;
    outcome(pass, format!("{} orbits, half-periods {t:.8?}, max residual {res:.2e}, {secs:.1} s", t.len()))
}

fn criterion_5(geoms: &[(&str, DomainSpec)]) -> Outcome {
    let mut worst = 0.0f64;
    let mut tested = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (_, spec) in geoms {
        let d0 = spec.delta0.unwrap();
        let pts: Vec<Vec<f64>> = std::iter::repeat_with(|| sample_sublevel(spec, d0, 200, &mut rng))
            .flatten()
            .filter(|p| spec.phi(p) >= -d0)
            .take(500)
            .collect();
        for x in &pts {
            let phi = spec.phi(x);
            let (dir, sign, room) =
                if rng.gen_bool(0.5) { (FlowDirection::Plus, 1.0, d0 - phi) } else { (FlowDirection::Minus, -1.0, d0 + phi) };
            let tau = rng.gen_range(0.0..1.0) * room.min(d0);
            match flow_eta(spec, x, tau, dir) {
                Ok(y) => worst = worst.max((spec.phi(&y) - phi - sign * tau).abs()),
                Err(_) => worst = f64::INFINITY,
            }
            tested += 1;
        }
    }
    outcome(tested == 500 * geoms.len() && worst < 1e-6, format!("{tested} points, max error {worst:.2e}"))
}

/// Point of {φ = 0} reached from `x + t v` along the line spanned by dφ(x).
fn boundary_curve(spec: &DomainSpec, x: &[f64], v: &[f64], n: &[f64], t: f64) -> Vec<f64> {
    let base: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + t * b).collect();
    let mut s = 0.0;
    let at = |s: f64| -> Vec<f64> { base.iter().zip(n).map(|(a, b)| a + s * b).collect() };
    for _ in 0..60 {
        let p = at(s);
        let step = spec.phi(&p) / dot(&spec.dphi(&p), n);
        s -= step;
        if step.abs() < 1e-17 {
            break;
        }
    }
    at(s)
}

/// Second fundamental form g(D_t γ', ∇φ) of the boundary, from finite
/// differences of a traced boundary curve and finite-difference Christoffels.
fn traced_second_form(spec: &DomainSpec, x: &[f64], v: &[f64]) -> f64 {
    let n = spec.dphi(x);
    let g = |t: f64| boundary_curve(spec, x, v, &n, t);
    let derivs = |h: f64| {
        let (p, m, c) = (g(h), g(-h), g(0.0));
        let vel: Vec<f64> = p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * h)).collect();
        let acc: Vec<f64> = (0..x.len()).map(|k| (p[k] - 2.0 * c[k] + m[k]) / (h * h)).collect();
        (vel, acc)
    };
    // Two Richardson levels on steps scaled to chart speed.
    let h = 1e-2 / v.iter().map(|c| c * c).sum::<f64>().sqrt();
    let (v1, a1) = derivs(h);
    let (v2, a2) = derivs(0.5 * h);
    let (v3, a3) = derivs(0.25 * h);
    let rich = |f1: &[f64], f2: &[f64], f3: &[f64]| -> Vec<f64> {
        (0..f1.len())
            .map(|k| {
                let (r1, r2) = ((4.0 * f2[k] - f1[k]) / 3.0, (4.0 * f3[k] - f2[k]) / 3.0);
                (16.0 * r2 - r1) / 15.0
            })
            .collect()
    };
    let vel = rich(&v1, &v2, &v3);
    let acc = rich(&a1, &a2, &a3);
    let gamma = spec.field.christoffel_finite_difference(x).contract(&vel, &vel);
    let cov: Vec<f64> = acc.iter().zip(&gamma).map(|(a, b)| a + b).collect();
    dot(&n, &cov)
}

fn criterion_6(geoms: &[(&str, DomainSpec)]) -> Outcome {
    let mut worst = 0.0f64;
    let mut tested = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for (_, spec) in geoms {
        for x in sample_boundary(spec, 500, &mut rng) {
            let d = spec.dphi(&x);
            let t = [-d[1], d[0]];
            let s = spec.field.norm_at(&x, &t);
            let v = [t[0] / s, t[1] / s];
            let hess = spec.hess_form(&x, &v, &v);
            worst = worst.max((hess + traced_second_form(spec, &x, &v)).abs());
            tested += 1;
        }
    }
    outcome(tested == 500 * geoms.len() && worst < 1e-6, format!("{tested} samples, max |H + II| {worst:.2e}"))
}

/// Curve from a boundary point toward an interior point with a sine wiggle,
/// or None if it leaves the closed domain.
fn probe_curve(spec: &DomainSpec, p: &[f64], q: &[f64], rng: &mut ChaCha8Rng) -> Option<DiscreteCurve> {
    let amp = rng.gen_range(0.0..0.2);
    let k = rng.gen_range(1..4) as f64;
    let ang = rng.gen_range(0.0..2.0 * PI);
    let x = DiscreteCurve::from_fn(2, 64, |s| {
        let w = amp * (k * PI * s).sin();
        vec![p[0] + s * (q[0] - p[0]) + w * ang.cos(), p[1] + s * (q[1] - p[1]) + w * ang.sin()]
    });
    let inside = (1..=x.n()).all(|i| spec.phi(x.node(i)) <= 0.0 && spec.field.is_valid_point(x.node(i)));
    inside.then_some(x)
}

fn criterion_7(geoms: &[(&str, DomainSpec)]) -> Outcome {
    let mut violations = 0;
    let mut tested = 0;
    let mut tightest = f64::INFINITY;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (_, spec) in geoms {
        let k0 = spec.k0.unwrap();
        let mut count = 0;
        let mut attempts = 0;
        while count < 1000 && attempts < 100_000 {
            attempts += 1;
            let p = sample_boundary(spec, 1, &mut rng).remove(0);
            let q = sample_sublevel(spec, 0.0, 1, &mut rng).remove(0);
            let Some(x) = probe_curve(spec, &p, &q, &mut rng) else { continue };
            let b = rng.gen_range(0.2..=1.0);
            let deepest = (0..=x.n()).filter(|&i| x.param(i) <= b).map(|i| -spec.phi(x.node(i))).fold(0.0, f64::max);
            if deepest < 1e-6 {
                continue;
            }
            let delta = rng.gen_range(0.0..=1.0) * deepest;
            let Ok(r) = depth_time_bound(&x, spec, 0.0, b, delta, k0) else { continue };
            if !r.holds {
                violations += 1;
            }
            if r.rhs > 0.0 {
                tightest = tightest.min(r.lhs / r.rhs);
            }
            count += 1;
        }
        tested += count;
    }
    let pass = tested == 1000 * geoms.len() && violations == 0;
    outcome(pass, format!("{tested} triples, {violations} violations, tightest ratio {tightest:.3}"))
}

fn criterion_8() -> Outcome {
    let spec = cap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        // Random piecewise speeds along a random chart direction.
        let pieces = rng.gen_range(2..6);
        let speeds: Vec<f64> = (0..pieces).map(|_| rng.gen_range(0.1..1.0)).collect();
        let ang = rng.gen_range(0.0..2.0 * PI);
        let x = DiscreteCurve::from_fn(2, 240, |s| {
            let f = s * pieces as f64;
            let k = (f.floor() as usize).min(pieces - 1);
            let r = speeds[..k].iter().sum::<f64>() / pieces as f64 + speeds[k] * (f - k as f64) / pieces as f64;
            vec![r * ang.cos() - 0.5, r * ang.sin()]
        });
        let a = rng.gen_range(0.0..0.3);
        let b = rng.gen_range(0.7..1.0);
        let c = rng.gen_range(a + 0.1..b - 0.1);
        let (i1, i2) = split_integrals(&x, &spec, a, c, b);
        for side in [Side::Minus, Side::Plus] {
            let h = 1e-5;
            let fd = (reparam_energy(i1, i2, a, c, b, h, side) - reparam_energy(i1, i2, a, c, b, -h, side)) / (2.0 * h);
            worst = worst.max((fd - reparam_energy_derivative(i1, i2, a, c, b, side)).abs());
        }
    }
    outcome(worst < 1e-6, format!("100 curves, max error {worst:.2e}"))
}

fn cap_point(theta: f64) -> Vec<f64> {
    let t = (PI / 3.0).tan();
    vec![t * theta.cos(), t * theta.sin()]
}

fn max_gap(x: &DiscreteCurve, y: &DiscreteCurve) -> f64 {
    x.nodes().zip(y.nodes()).map(|(p, q)| dist(p, q)).fold(0.0, f64::max)
}

#[derive(Default)]
struct FlowTally {
    states: usize,
    failures: Vec<String>,
    equivariance: f64,
}

impl FlowTally {
    fn fail(&mut self, what: String) {
        if self.failures.len() < 3 {
            self.failures.push(what);
        }
    }

    fn mirror(&mut self, a: &FlowStepResult, b: &FlowStepResult) {
        self.equivariance = self.equivariance.max(max_gap(&reverse(&a.curve), &b.curve)).max((a.f_after - b.f_after).abs());
    }
}

fn flow_type_a(t: &mut FlowTally, rng: &mut ChaCha8Rng) {
    let spec = cap().with_delta0(0.4).with_k0(4.0);
    let ledger = ConstantsLedger::assemble(&spec, 40.0, 0, &LedgerOverrides::default()).unwrap();
    let opts = GeneratorOptions { n: 64, inj_bound: 1.0, min_pieces: 4 };
    let mut done = 0;
    while done < 80 {
        let (a, b) = (rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI));
        if (a - b).abs() < 0.3 {
            continue;
        }
        let bend = rng.gen_range(-0.3..0.3);
        let tau = rng.gen_range(1e-3..0.1);
        let x0 = chord_generator(&spec, &cap_point(a), &cap_point(b), &opts).unwrap();
        let x = DiscreteCurve::from_fn(2, 64, |s| {
            let p = x0.eval(s);
            let w = bend * (PI * s).sin();
            vec![p[0] - w * p[1], p[1] + w * p[0]]
        });
        let (Ok(r), Ok(m)) = (type_a_step(&x, &spec, &ledger, tau), type_a_step(&reverse(&x), &spec, &ledger, tau)) else {
            continue;
        };
        done += 1;
        t.states += 1;
        if r.accepted && r.f_after >= r.f_before {
            t.fail(format!("A: F {} -> {}", r.f_before, r.f_after));
        }
        if !r.interval_map.iter().all(Option::is_some) {
            t.fail("A: nesting lost".into());
        }
        t.mirror(&r, &m);
    }
}

fn flow_type_b(t: &mut FlowTally, rng: &mut ChaCha8Rng) {
    let spec = cap().with_delta0(0.4).with_k0(4.0);
    let ledger = ConstantsLedger::assemble(&spec, 40.0, 0, &LedgerOverrides::default()).unwrap();
    let opts = GeneratorOptions { n: 160, inj_bound: 1.0, min_pieces: 4 };
    let mut done = 0;
    while done < 60 {
        let (a, b) = (rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI));
        if (a - b).abs() < 0.5 {
            continue;
        }
        let tail = rng.gen_range(0.05..0.3);
        let lead = rng.gen_bool(0.5);
        let x0 = chord_generator(&spec, &cap_point(a), &cap_point(b), &opts).unwrap();
        let x = DiscreteCurve::from_fn(2, 160, |s| {
            let u = if lead { (s - tail) / (1.0 - tail) } else { s / (1.0 - tail) };
            x0.eval(u.clamp(0.0, 1.0))
        });
        let (Ok(r), Ok(m)) = (type_b_step(&x, &spec, &ledger), type_b_step(&reverse(&x), &spec, &ledger)) else {
            t.fail("B: no step on a tailed chord".into());
            continue;
        };
        done += 1;
        t.states += 1;
        if r.accepted && r.f_after >= r.f_before {
            t.fail(format!("B: F {} -> {}", r.f_before, r.f_after));
        }
        t.mirror(&r, &m);
    }
}

fn flow_type_c(t: &mut FlowTally, rng: &mut ChaCha8Rng) {
    let spec = half_plane().with_delta0(1.0);
    let ov = LedgerOverrides { delta_bar: Some(0.25), ..Default::default() };
    let ledger = ConstantsLedger::assemble(&spec, 10.0, 3, &ov).unwrap();
    let mut done = 0;
    let mut attempts = 0;
    while done < 60 && attempts < 10_000 {
        attempts += 1;
        let mid = [rng.gen_range(-0.2..0.2), -rng.gen_range(0.0..0.01)];
        let pts = [
            [-1.0, 0.0],
            [rng.gen_range(-0.7..-0.3), -rng.gen_range(0.6..1.2)],
            mid,
            [rng.gen_range(0.3..0.7), -rng.gen_range(0.6..1.2)],
            [1.0, 0.0],
        ];
        let x = DiscreteCurve::from_fn(2, 128, |s| {
            let u = s * 4.0;
            let i = (u.floor() as usize).min(3);
            let w = u - i as f64;
            vec![pts[i][0] + w * (pts[i + 1][0] - pts[i][0]), pts[i][1] + w * (pts[i + 1][1] - pts[i][1])]
        });
        let Ok(targets) = find_nonessential_intervals(&x, &spec, &ledger.proximity()) else { continue };
        if targets.is_empty() {
            continue;
        }
        let (Ok(r), Ok(m)) = (type_c_step(&x, &spec, &ledger), type_c_step(&reverse(&x), &spec, &ledger)) else {
            t.fail("C: step failed on a flagged state".into());
            continue;
        };
        done += 1;
        t.states += 1;
        for iv in &targets {
            match bending_and_proximity(&r.curve, &spec, iv.a, iv.b, ledger.delta_bar) {
                Ok((_, prox)) if prox <= -0.5 * ledger.sigma1 => {}
                other => t.fail(format!("C: proximity {other:?}")),
            }
        }
        t.mirror(&r, &m);
    }
}

fn criterion_9() -> Outcome {
    let mut tally = FlowTally::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    flow_type_a(&mut tally, &mut rng);
    flow_type_b(&mut tally, &mut rng);
    flow_type_c(&mut tally, &mut rng);
    let pass = tally.states == 200 && tally.failures.is_empty() && tally.equivariance < 1e-10;
    let mut detail = format!("{} states, reversal gap {:.2e}", tally.states, tally.equivariance);
    for f in &tally.failures {
        detail.push_str(&format!("; {f}"));
    }
    outcome(pass, detail)
}

fn criterion_10() -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    for (name, spec) in [("disk", euclidean_disk(1.0).unwrap()), ("half-plane", half_plane())] {
        let rep = check_strong_concavity(&spec, 200);
        let Some(w) = rep.witnesses.first() else {
            pass = false;
            lines.push(format!("{name}: no witness"));
            continue;
        };
        let tangent = dot(&spec.dphi(&w.point), &w.tangent).abs() < 1e-9;
        let recomputed = spec.hess_form(&w.point, &w.tangent, &w.tangent);
        let ok = !rep.is_strongly_concave
            && solve_existence(&spec, &SolveOptions::default()).is_err()
            && spec.phi(&w.point).abs() < 1e-9
            && tangent
            && w.hess_value >= 0.0
            && (recomputed - w.hess_value).abs() < 1e-12;
        pass &= ok;
        lines.push(format!("{name}: witness at ({:.3}, {:.3}) with H = {:.2e}", w.point[0], w.point[1], w.hess_value));
    }
    outcome(pass, lines.join("; "))
}

fn criterion_11(r: &Runs) -> Outcome {
    let opts = SolveOptions { n: 256, grid: 64, ..Default::default() };
    let fine = match solve_existence(&cap(), &opts) {
        Ok(f) => f,
        Err(e) => return outcome(false, format!("refined solve failed: {e}")),
    };
    let (Some(a), Some(b)) = (r.cap.chords.first(), fine.chords.first()) else {
        return outcome(false, "missing chord".into());
    };
    let rel = (a.length - b.length).abs() / a.length;
    outcome(rel < 1e-3, format!("L {:.6} -> {:.6}, relative change {rel:.2e}", a.length, b.length))
}

fn main() -> ExitCode {
    let start = Instant::now();
    let t0 = Instant::now();
    let cap_report = solve_existence(&cap(), &SolveOptions::default()).expect("cap solve");
    let cap_secs = t0.elapsed().as_secs_f64();
    let well_spec = jacobi_metric(&well(), 0.05).unwrap();
    let well_report = solve_existence(&well_spec, &SolveOptions { max_chords: 2, ..Default::default() }).expect("well solve");
    let runs = Runs { cap: cap_report, cap_secs, well: well_report };
    let geoms = geometries();

    let results: Vec<(&str, Outcome)> = vec![
        ("sphere-cap chord", criterion_1(&runs)),
        ("residuals at acceptance", criterion_2(&runs)),
        ("level lower bound", criterion_3(&runs)),
        ("ellipsoid brake orbits", criterion_4()),
        ("eta flow identity", criterion_5(&geoms)),
        ("Hessian / second fundamental form", criterion_6(&geoms)),
        ("depth-time inequality", criterion_7(&geoms)),
        ("reparameterization derivative", criterion_8()),
        ("flow contracts", criterion_9()),
        ("concavity gate negatives", criterion_10()),
        ("grid refinement", criterion_11(&runs)),
    ];
    let mut failed = 0;
    for (k, (name, o)) in results.iter().enumerate() {
        println!("criterion {:>2} {}: {} ({})", k + 1, if o.pass { "PASS" } else { "FAIL" }, name, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed in {:.1} s", results.len() - failed, results.len(), start.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
