//! Config-driven runs of the chord and brake-orbit solvers, writing JSON, CSV
//! and SVG artifacts.

pub mod config;
pub mod plot;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use ogc_core::domain::check_strong_concavity;
use ogc_core::flows::ConstantsLedger;
use ogc_core::hamiltonian::{brake_orbits, ellipsoid_reference, BrakeOrbit};
use ogc_core::minimax::{prepare, solve_existence, ChordResult, SolveReport, TraceRow, WogcScan};
use ogc_core::{DomainSpec, OgcError};
use serde::{Deserialize, Serialize};

pub use config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Check,
    Brake,
}

#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: Command,
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub plot: bool,
    pub seed: Option<u64>,
}

/// Contents of chords.json.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChordsFile {
    pub geometry: String,
    pub seed: u64,
    pub chords: Vec<ChordResult>,
}

/// Contents of constants.json.
#[derive(Debug, Clone, Serialize)]
pub struct ConstantsFile {
    pub geometry: String,
    pub seed: u64,
    pub strongly_concave: bool,
    pub ledger: ConstantsLedger,
    pub level_bound: f64,
    pub level_bound_ok: Option<bool>,
    pub admitted: Option<bool>,
    pub levels: Vec<f64>,
    pub wogc: WogcScan,
}

/// Contents of orbits.json.
#[derive(Debug, Clone, Serialize)]
pub struct OrbitsFile {
    pub lambdas: Vec<f64>,
    pub energy: f64,
    pub rho: f64,
    pub rational_ratio: bool,
    pub warnings: Vec<String>,
    pub orbits: Vec<BrakeOrbit>,
    /// Closed-form axis orbits for comparison.
    pub reference: Vec<BrakeOrbit>,
}

/// Runs one command and returns the process exit code: 0 on success, 2 when
/// the solver stalls, 1 for invalid input and every other failure.
pub fn run(inv: &Invocation) -> i32 {
    match dispatch(inv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &anyhow::Error) -> i32 {
    match e.downcast_ref::<OgcError>() {
        Some(OgcError::Stalled { .. } | OgcError::NoConvergence(_)) => 2,
        _ => 1,
    }
}

fn dispatch(inv: &Invocation) -> Result<()> {
    let mut cfg = RunConfig::load(&inv.config)?;
    if let Some(s) = inv.seed {
        cfg.seed = s;
    }
    let out = inv.out.clone().or_else(|| cfg.outputs.dir.clone());
    let plot = inv.plot || cfg.outputs.plot;
    match inv.command {
        Command::Solve => cmd_solve(&cfg, out.as_deref().ok_or_else(missing_out)?, plot),
        Command::Check => cmd_check(&cfg, inv.out.as_deref()),
        Command::Brake => cmd_brake(&cfg, out.as_deref().ok_or_else(missing_out)?, plot),
    }
}

fn missing_out() -> anyhow::Error {
    anyhow!("no output directory: pass --out or set outputs.dir")
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(dir.join(name), text).with_context(|| format!("writing {name}"))
}

fn write_trace(dir: &Path, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join("trace.csv")).context("writing trace.csv")?;
    // An empty trace still gets its header.
    if rows.is_empty() {
        w.write_record(["iter", "step_kind", "F", "residual", "displacement", "cusps"])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn constants_file(cfg: &RunConfig, spec: &DomainSpec, report: &SolveReport) -> ConstantsFile {
    ConstantsFile {
        geometry: spec.name.clone(),
        seed: cfg.seed,
        strongly_concave: true,
        ledger: report.ledger.clone(),
        level_bound: report.level_bound,
        level_bound_ok: Some(report.level_bound_ok),
        admitted: Some(report.admitted),
        levels: report.levels.clone(),
        wogc: report.wogc.clone(),
    }
}

/// chords.json, trace.csv, constants.json and optionally plot.svg for one solve.
fn write_solve(cfg: &RunConfig, spec: &DomainSpec, report: &SolveReport, dir: &Path, extra: &[Vec<Vec<f64>>], plot: bool) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let chords = ChordsFile { geometry: spec.name.clone(), seed: cfg.seed, chords: report.chords.clone() };
    write_json(dir, "chords.json", &chords)?;
    write_trace(dir, &report.trace)?;
    write_json(dir, "constants.json", &constants_file(cfg, spec, report))?;
    if plot {
        let mut lines: Vec<Vec<Vec<f64>>> = report.chords.iter().map(|c| c.curve.nodes().map(<[f64]>::to_vec).collect()).collect();
        lines.extend(extra.iter().cloned());
        let mut shown = spec.clone();
        shown.delta0 = Some(report.ledger.delta0);
        fs::write(dir.join("plot.svg"), plot::render(&shown, &lines)).context("writing plot.svg")?;
    }
    Ok(())
}

fn print_chords(chords: &[ChordResult]) {
    for (k, c) in chords.iter().enumerate() {
        println!(
            "chord {k}: length {:.6}, energy {:.6}, geodesic residual {:.2e}, orthogonality {:.2e}",
            c.length, c.energy, c.geodesic_residual, c.orthogonality_defect
        );
    }
}

pub fn cmd_solve(cfg: &RunConfig, out: &Path, plot: bool) -> Result<()> {
    let spec = cfg.domain()?;
    let report = solve_existence(&spec, &cfg.solve_options())?;
    print_chords(&report.chords);
    if report.chords.is_empty() {
        bail!(OgcError::NoConvergence("no chord found".into()));
    }
    write_solve(cfg, &spec, &report, out, &[], plot)
}

pub fn cmd_check(cfg: &RunConfig, out: Option<&Path>) -> Result<()> {
    let spec = cfg.domain()?;
    let opts = cfg.solve_options();
    let concavity = check_strong_concavity(&spec, opts.concavity_samples);
    println!("geometry: {}", spec.name);
    println!("strongly concave: {}", concavity.is_strongly_concave);
    if let Some(w) = concavity.witnesses.first() {
        println!("witness: point {:?}, tangent {:?}, Hessian value {:e}", w.point, w.tangent, w.hess_value);
    }
    let p = prepare(&spec, &opts)?;
    let l = &p.ledger;
    println!("delta0: {:.6e}", l.delta0);
    println!("K0: {:.6e}", l.k0);
    println!("M0: {:.6e}", l.m0);
    println!("lambda1: {:.6e}", l.lambda1);
    println!("c1 lower bound: {:.6e}", l.c1_lower_bound);
    println!(
        "WOGC scan: {} samples, {} escaped, {} flagged, min defect {:.3e}",
        p.wogc.samples,
        p.wogc.escaped,
        p.wogc.flagged.len(),
        p.wogc.min_defect
    );
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        let file = ConstantsFile {
            geometry: p.spec.name.clone(),
            seed: cfg.seed,
            strongly_concave: true,
            ledger: p.ledger.clone(),
            level_bound: p.ledger.c1_lower_bound,
            level_bound_ok: None,
            admitted: None,
            levels: Vec::new(),
            wogc: p.wogc.clone(),
        };
        write_json(dir, "constants.json", &file)?;
    }
    Ok(())
}

pub fn cmd_brake(cfg: &RunConfig, out: &Path, plot: bool) -> Result<()> {
    let config::Geometry::Ellipsoid { lambdas, energy, .. } = &cfg.geometry else {
        bail!("config error at `geometry.kind`: brake needs an ellipsoid Hamiltonian");
    };
    let (ham, rho) = cfg.hamiltonian().expect("ellipsoid")?;
    let reference = ellipsoid_reference(lambdas, *energy)?;
    let mut warnings = Vec::new();
    if reference.rational_ratio {
        let w = "rational frequency ratio: brake orbits beyond the axis orbits may be degenerate".to_string();
        eprintln!("warning: {w}");
        warnings.push(w);
    }
    let report = brake_orbits(&ham, rho, &cfg.solve_options(), &cfg.shooting_options())?;
    print_chords(&report.solve.chords);
    for (k, o) in report.orbits.iter().enumerate() {
        println!(
            "orbit {k}: half-period {:.9}, amplitude {:.6}, residuals {:.2e} / {:.2e}",
            o.half_period, o.amplitude, o.residual_p0, o.residual_pt
        );
    }
    let tracks: Vec<Vec<Vec<f64>>> = report.orbits.iter().map(|o| o.q_traj.clone()).collect();
    write_solve(cfg, &report.spec, &report.solve, out, &tracks, plot)?;
    let file = OrbitsFile {
        lambdas: lambdas.clone(),
        energy: *energy,
        rho,
        rational_ratio: reference.rational_ratio,
        warnings,
        orbits: report.orbits,
        reference: reference.orbits,
    };
    write_json(out, "orbits.json", &file)
}
