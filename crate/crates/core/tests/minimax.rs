use std::f64::consts::PI;

use ogc_core::error::OgcError;
use ogc_core::flows::{ConstantsLedger, LedgerOverrides, StepKind};
use ogc_core::geometries::{euclidean_disk, half_plane, sphere_cap, CapPhi};
use ogc_core::minimax::*;
use ogc_core::pathspace::{boundary_grid, DiscreteCurve, GeneratorOptions, PathFamily};

/// Piecewise-linear curve through (s, point) knots.
fn knots(k: &[(f64, [f64; 2])], n: usize) -> DiscreteCurve {
    DiscreteCurve::from_fn(2, n, |s| {
        let i = k.iter().rposition(|(t, _)| *t <= s).unwrap().min(k.len() - 2);
        let ((s0, p), (s1, q)) = (k[i], k[i + 1]);
        let w = (s - s0) / (s1 - s0);
        vec![p[0] + w * (q[0] - p[0]), p[1] + w * (q[1] - p[1])]
    })
}

/// Constant-speed V into {y < 0} over a parameter span of 0.4 with product
/// (b − a)·½∫|ẋ|² = ½·v²·0.4².
fn dip(x0: f64, s0: f64, v: f64) -> [(f64, [f64; 2]); 3] {
    let leg = 0.2 * v;
    [(s0, [x0, 0.0]), (s0 + 0.2, [x0 + 0.8 * leg, -0.6 * leg]), (s0 + 0.4, [x0 + 1.6 * leg, 0.0])]
}

#[test]
fn functional_examples() {
    let hp = half_plane();
    let grid = vec![vec![0.0, 0.0]];
    let flat = HomotopyState::from_curves(grid.clone(), vec![DiscreteCurve::constant(&[0.0, 0.0], 32)], 10.0, &hp).unwrap();
    assert_eq!(functional_f(&flat, &hp).unwrap(), 0.0);

    let disk = euclidean_disk(0.5).unwrap();
    let unit = DiscreteCurve::segment(&[-0.5, 0.0], &[0.5, 0.0], 32);
    let st = HomotopyState::from_curves(grid.clone(), vec![unit], 10.0, &disk).unwrap();
    assert!((functional_f(&st, &disk).unwrap() - 0.5).abs() < 1e-14);

    // Products 0.3 and 0.7 from v² = 3.75 and 8.75, separated by an exterior bump.
    let (v1, v2) = (3.75f64.sqrt(), 8.75f64.sqrt());
    let a = dip(0.0, 0.0, v1);
    let x1 = a[2].1[0];
    let mut k: Vec<(f64, [f64; 2])> = a.to_vec();
    k.push((0.5, [x1 + 0.1, 0.2]));
    k.extend(dip(x1 + 0.2, 0.6, v2));
    let two = knots(&k, 100);
    let st = HomotopyState::from_curves(grid.clone(), vec![two.clone()], 10.0, &hp).unwrap();
    assert!((functional_f(&st, &hp).unwrap() - 0.7).abs() < 1e-12);
    assert!((st.functional() - 0.7).abs() < 1e-12);

    let tight = HomotopyState::from_curves(grid, vec![two], 1.0, &hp).unwrap();
    assert!(matches!(functional_f(&tight, &hp), Err(OgcError::CurveLeftM)));
}

#[test]
fn state_needs_one_curve_per_pair() {
    let hp = half_plane();
    let r = HomotopyState::from_curves(vec![vec![0.0, 0.0]; 2], vec![DiscreteCurve::constant(&[0.0, 0.0], 8)], 1.0, &hp);
    assert!(matches!(r, Err(OgcError::InvalidInput(_))));
}

fn tr(from: u64, to: u64, tags: &[StepKind]) -> Transition {
    Transition::from_tags(from, to, tags)
}

#[test]
fn concatenation() {
    use StepKind::*;
    let h = tr(1, 2, &[C, A, A, B]);
    assert_eq!(h.tag_log(), vec![C, A, B]);
    assert_eq!(concatenate(&Transition::identity(1), &h).unwrap(), h);
    assert_eq!(concatenate(&h, &Transition::identity(2)).unwrap(), h);

    let g = tr(2, 3, &[A, B]);
    let hg = concatenate(&h, &g).unwrap();
    assert_eq!((hg.from, hg.to), (1, 3));
    assert_eq!(hg.tag_log(), vec![C, A, B, A, B]);
    let ends: Vec<f64> = hg.segments.iter().map(|s| s.end).collect();
    assert!((ends[2] - 0.5).abs() < 1e-15 && (ends[4] - 1.0).abs() < 1e-15);
    for w in hg.segments.windows(2) {
        assert_eq!(w[0].end, w[1].start);
    }
    assert!(matches!(concatenate(&g, &h), Err(OgcError::Mismatch)));
}

fn chord(energy: f64, y: f64) -> ChordResult {
    let curve = DiscreteCurve::segment(&[-1.0, y], &[1.0, y], 16);
    ChordResult {
        energy,
        length: (2.0 * energy).sqrt(),
        geodesic_residual: 0.0,
        orthogonality_defect: 0.0,
        is_wogc: false,
        boundary_points: (vec![-1.0, y], vec![1.0, y]),
        curve,
        seed: (0, 1),
        level: energy,
    }
}

#[test]
fn dedup_examples() {
    assert_eq!(dedup_chords(vec![chord(8.77, 0.0), chord(8.78, 0.0)], 0.05, f64::INFINITY).len(), 1);
    assert_eq!(dedup_chords(vec![chord(4.0, 0.0), chord(9.0, 0.0)], 0.05, f64::INFINITY).len(), 2);
    assert_eq!(dedup_chords(vec![chord(4.0, 0.0), chord(4.0, 0.0)], 1e-9, 0.0).len(), 1);
    // Same energy, different images, kept apart by the shape tolerance.
    assert_eq!(dedup_chords(vec![chord(4.0, 0.0), chord(4.0, 0.5)], 1e-9, 0.1).len(), 2);
    assert_eq!(hausdorff(&chord(1.0, 0.0).curve, &chord(1.0, 0.5).curve), 0.5);
}

fn cap_setup() -> (ogc_core::DomainSpec, HomotopyState, ConstantsLedger) {
    let spec = sphere_cap(2.0 * PI / 3.0, CapPhi::Height).unwrap().with_delta0(0.4);
    let spec = spec.clone().with_k0(ogc_core::domain::compute_k0(&spec, 500, 0).unwrap());
    let grid = boundary_grid(&spec, 8, 0).unwrap();
    let family = PathFamily::build(&spec, grid, &GeneratorOptions::for_spec(&spec, 64, 0).unwrap()).unwrap();
    let ledger = ConstantsLedger::assemble(&spec, family.m0, 0, &LedgerOverrides::default()).unwrap();
    let state = HomotopyState::from_family(&family, &spec).unwrap();
    (spec, state, ledger)
}

#[test]
fn initial_state_is_admissible() {
    let (spec, state, ledger) = cap_setup();
    assert!(admission_h1(&state, &spec, &ledger).unwrap());
    let m = state.grid.len();
    for i in 0..m {
        assert!(state.curve(i, i).is_constant(0.0));
        for j in 0..m {
            let (a, b) = (state.curve(i, j), state.curve(j, i));
            let n = a.n();
            for k in 0..=n {
                assert_eq!(a.node(k), b.node(n - k));
            }
        }
    }
}

#[test]
fn first_deformation_contract() {
    let (spec, state, ledger) = cap_setup();
    let c = state.functional();
    assert!(matches!(first_deformation(&state, &spec, &ledger, c, 0.0, &DeformationOptions::default()), Err(OgcError::InvalidInput(_))));
    // Far above the chord level the band simply moves down.
    let eps = 0.05 * state.m0;
    match first_deformation(&state, &spec, &ledger, c, eps, &DeformationOptions::default()).unwrap() {
        DeformationOutcome::Lowered { state: s, transition } => {
            assert!(s.functional() <= c - eps);
            assert_eq!(transition.from, state.fingerprint());
            assert_eq!(transition.to, s.fingerprint());
            assert!(!transition.segments.is_empty());
        }
        DeformationOutcome::Ogc { .. } => panic!("no chord expected at level {c}"),
    }
}

#[test]
fn disk_is_rejected_before_iterating() {
    let disk = euclidean_disk(1.0).unwrap();
    assert!(matches!(solve_existence(&disk, &SolveOptions::default()), Err(OgcError::NotConcave(_))));
}

#[test]
fn cap_meridian() {
    let spec = sphere_cap(2.0 * PI / 3.0, CapPhi::Height).unwrap();
    let r = solve_existence(&spec, &SolveOptions::default()).unwrap();
    assert!(!r.chords.is_empty());
    for c in &r.chords {
        assert!((c.length - 4.0 * PI / 3.0).abs() < 1e-3, "{}", c.length);
        assert!((c.energy - 8.0 * PI * PI / 9.0).abs() < 2e-3, "{}", c.energy);
        assert!((c.energy - 0.5 * c.length * c.length).abs() < 1e-6);
        assert!(c.geodesic_residual < 1e-6 && c.orthogonality_defect < 1e-4 && !c.is_wogc);
        assert!(spec.phi(&c.boundary_points.0).abs() < 1e-9 && spec.phi(&c.boundary_points.1).abs() < 1e-9);
    }
    assert!(r.level_bound_ok && r.chords[0].energy >= r.level_bound);
    assert!(r.admitted);
    for w in r.levels.windows(2) {
        assert!(w[1] <= w[0], "{:?}", r.levels);
    }
    assert!(r.trace.iter().all(|row| row.f.is_finite()));
}
