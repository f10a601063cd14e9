//! Shared fixtures for the benchmarks.

use std::f64::consts::{PI, SQRT_2};

use ogc_core::geometries::{sphere_cap, CapPhi};
use ogc_core::hamiltonian::NaturalHamiltonian;
use ogc_core::pathspace::{chord_generator, DiscreteCurve, GeneratorOptions};
use ogc_core::DomainSpec;

pub fn cap() -> DomainSpec {
    sphere_cap(2.0 * PI / 3.0, CapPhi::Height).unwrap().with_delta0(0.4).with_k0(4.0)
}

pub fn cap_point(theta: f64) -> Vec<f64> {
    let t = (PI / 3.0).tan();
    vec![t * theta.cos(), t * theta.sin()]
}

/// Generator chord across the cap, bent off the geodesic so flows have work to do.
pub fn bent_chord(spec: &DomainSpec, n: usize) -> DiscreteCurve {
    let opts = GeneratorOptions { n, inj_bound: 1.0, min_pieces: 4 };
    let x = chord_generator(spec, &cap_point(0.3), &cap_point(2.5), &opts).unwrap();
    DiscreteCurve::from_fn(2, n, |s| {
        let p = x.eval(s);
        let w = 0.2 * (PI * s).sin();
        vec![p[0] - w * p[1], p[1] + w * p[0]]
    })
}

pub fn well() -> NaturalHamiltonian {
    NaturalHamiltonian::ellipsoid(&[1.0, SQRT_2], 1.0).unwrap()
}
