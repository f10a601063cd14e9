use std::fmt::Write;

use ogc_core::geometry::ChartDomain;
use ogc_core::DomainSpec;

const SIZE: f64 = 640.0;
const CELLS: usize = 160;

/// Sampling region, clipped to a box of half-width 10.
fn window(spec: &DomainSpec) -> ([f64; 2], [f64; 2]) {
    match &spec.sampling {
        ChartDomain::Ball { center, radius } => {
            let r = radius.min(10.0);
            ([center[0] - r, center[1] - r], [center[0] + r, center[1] + r])
        }
        ChartDomain::Box { lo, hi } => ([lo[0].max(-10.0), lo[1].max(-10.0)], [hi[0].min(10.0), hi[1].min(10.0)]),
    }
}

/// Segments of {φ = level} by marching squares.
fn contour(spec: &DomainSpec, lo: [f64; 2], hi: [f64; 2], level: f64) -> Vec<[[f64; 2]; 2]> {
    let dx = (hi[0] - lo[0]) / CELLS as f64;
    let dy = (hi[1] - lo[1]) / CELLS as f64;
    let pt = |i: usize, j: usize| [lo[0] + i as f64 * dx, lo[1] + j as f64 * dy];
    let vals: Vec<Vec<f64>> = (0..=CELLS).map(|i| (0..=CELLS).map(|j| spec.phi(&pt(i, j)) - level).collect()).collect();
    let mut out = Vec::new();
    for i in 0..CELLS {
        for j in 0..CELLS {
            let corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
            let mut hits = Vec::with_capacity(4);
            for k in 0..4 {
                let (a, b) = (corners[k], corners[(k + 1) % 4]);
                let (va, vb) = (vals[a.0][a.1], vals[b.0][b.1]);
                if !(va.is_finite() && vb.is_finite()) || (va < 0.0) == (vb < 0.0) {
                    continue;
                }
                let t = va / (va - vb);
                let (pa, pb) = (pt(a.0, a.1), pt(b.0, b.1));
                hits.push([pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])]);
            }
            for pair in hits.chunks_exact(2) {
                out.push([pair[0], pair[1]]);
            }
        }
    }
    out
}

/// Square box around {φ ≤ 0} within the window and the given points, with a margin.
fn fit(spec: &DomainSpec, lo: [f64; 2], hi: [f64; 2], extra: &[Vec<Vec<f64>>]) -> ([f64; 2], [f64; 2]) {
    let mut a = [f64::INFINITY; 2];
    let mut b = [f64::NEG_INFINITY; 2];
    let mut take = |p: &[f64]| {
        for k in 0..2 {
            a[k] = a[k].min(p[k]);
            b[k] = b[k].max(p[k]);
        }
    };
    for i in 0..=CELLS {
        for j in 0..=CELLS {
            let p = [lo[0] + (hi[0] - lo[0]) * i as f64 / CELLS as f64, lo[1] + (hi[1] - lo[1]) * j as f64 / CELLS as f64];
            if spec.phi(&p) <= 0.0 {
                take(&p);
            }
        }
    }
    extra.iter().flatten().for_each(|p| take(p));
    if !(a[0] < b[0] && a[1] < b[1]) {
        return (lo, hi);
    }
    let half = 0.6 * (b[0] - a[0]).max(b[1] - a[1]);
    let c = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
    ([c[0] - half, c[1] - half], [c[0] + half, c[1] + half])
}

/// SVG of ∂Ω, the level set φ = −δ₀, the chart edge when visible and the given polylines.
pub fn render(spec: &DomainSpec, polylines: &[Vec<Vec<f64>>]) -> String {
    let (lo, hi) = window(spec);
    let (lo, hi) = fit(spec, lo, hi, polylines);
    let scale = SIZE / (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let map = |p: &[f64]| ((p[0] - lo[0]) * scale, SIZE - (p[1] - lo[1]) * scale);
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#);
    let _ = writeln!(svg, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    if let ChartDomain::Ball { center, radius } = &spec.field.chart() {
        let (cx, cy) = map(center);
        let _ = writeln!(
            svg,
            r##"<circle cx="{cx:.2}" cy="{cy:.2}" r="{:.2}" fill="none" stroke="#999999" stroke-dasharray="4 3"/>"##,
            radius * scale
        );
    }
    let mut levels = vec![(0.0, "#1f4e9c", 1.6)];
    if let Some(d) = spec.delta0 {
        levels.push((-d, "#7fa7e0", 1.0));
    }
    for (level, color, width) in levels {
        let _ = write!(svg, r#"<path fill="none" stroke="{color}" stroke-width="{width}" d=""#);
        for [a, b] in contour(spec, lo, hi, level) {
            let ((x0, y0), (x1, y1)) = (map(&a), map(&b));
            let _ = write!(svg, "M{x0:.2} {y0:.2}L{x1:.2} {y1:.2}");
        }
        let _ = writeln!(svg, r#""/>"#);
    }
    for line in polylines {
        let pts: Vec<String> = line.iter().map(|p| map(p)).map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(svg, r##"<polyline fill="none" stroke="#c0392b" stroke-width="2" points="{}"/>"##, pts.join(" "));
    }
    svg.push_str("</svg>\n");
    svg
}
