use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use ogc_core::flows::LedgerOverrides;
use ogc_core::geometries::{euclidean_disk, half_plane, sphere_cap, CapPhi};
use ogc_core::hamiltonian::{jacobi_metric, NaturalHamiltonian, ShootingOptions};
use ogc_core::minimax::{DeformationOptions, SolveOptions};
use ogc_core::DomainSpec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: Geometry,
    #[serde(default)]
    pub discretization: Discretization,
    #[serde(default)]
    pub constants: LedgerOverrides,
    #[serde(default)]
    pub budgets: Budgets,
    #[serde(default)]
    pub outputs: Outputs,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapBoundary {
    Height,
    Distance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Geometry {
    /// Geodesic ball of the unit sphere, in stereographic coordinates.
    SphereCap {
        #[serde(default = "default_cap_radius")]
        radius: f64,
        #[serde(default = "default_cap_boundary")]
        boundary: CapBoundary,
    },
    EuclideanDisk {
        #[serde(default = "one")]
        radius: f64,
    },
    HalfPlane {},
    /// V(q) = Σ λᵢ² qᵢ² at energy E, seen through its Jacobi metric.
    Ellipsoid {
        lambdas: Vec<f64>,
        #[serde(default = "one")]
        energy: f64,
        #[serde(default = "default_rho")]
        rho: f64,
    },
}

fn default_cap_radius() -> f64 {
    2.0 * PI / 3.0
}

fn default_cap_boundary() -> CapBoundary {
    CapBoundary::Height
}

fn one() -> f64 {
    1.0
}

fn default_rho() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Discretization {
    pub n: usize,
    pub grid: usize,
    /// Time step of the Hamiltonian shooting integrator.
    pub step: f64,
    pub energy_tol: f64,
}

impl Default for Discretization {
    fn default() -> Self {
        Discretization { n: 128, grid: 32, step: 1e-3, energy_tol: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Budgets {
    pub max_outer: usize,
    pub max_iters: usize,
    pub max_chords: usize,
    pub wall_clock_secs: Option<f64>,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets { max_outer: 200, max_iters: 400, max_chords: 1, wall_clock_secs: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Outputs {
    pub dir: Option<PathBuf>,
    pub plot: bool,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        let de = toml::Deserializer::new(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let msg = inner.message().trim().to_string();
            anyhow::anyhow!("config error at `{path}`: {msg}")
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        RunConfig::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.discretization;
        if !d.n.is_power_of_two() || !(32..=2048).contains(&d.n) {
            bail!("config error at `discretization.n`: must be a power of two in [32, 2048], got {}", d.n);
        }
        if d.grid < 2 {
            bail!("config error at `discretization.grid`: need at least 2 boundary points, got {}", d.grid);
        }
        for (name, v) in [("discretization.step", d.step), ("discretization.energy_tol", d.energy_tol)] {
            if !(v > 0.0 && v.is_finite()) {
                bail!("config error at `{name}`: must be positive, got {v}");
            }
        }
        if self.budgets.max_outer == 0 || self.budgets.max_iters == 0 || self.budgets.max_chords == 0 {
            bail!("config error at `budgets`: iteration and chord budgets must be positive");
        }
        if let Some(s) = self.budgets.wall_clock_secs {
            if !(s > 0.0 && s.is_finite()) {
                bail!("config error at `budgets.wall_clock_secs`: must be positive, got {s}");
            }
        }
        match &self.geometry {
            Geometry::SphereCap { radius, .. } if !(*radius > 0.0 && *radius < PI) => {
                bail!("config error at `geometry.radius`: cap radius must lie in (0, π), got {radius}")
            }
            Geometry::EuclideanDisk { radius } if !(*radius > 0.0) => {
                bail!("config error at `geometry.radius`: must be positive, got {radius}")
            }
            Geometry::Ellipsoid { lambdas, rho, .. } => {
                if lambdas.is_empty() {
                    bail!("config error at `geometry.lambdas`: at least one frequency is required");
                }
                if !(*rho > 0.0) {
                    bail!("config error at `geometry.rho`: must be positive, got {rho}");
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            n: self.discretization.n,
            grid: self.discretization.grid,
            seed: self.seed,
            overrides: self.constants.clone(),
            max_chords: self.budgets.max_chords,
            max_outer: self.budgets.max_outer,
            deformation: DeformationOptions { max_iters: self.budgets.max_iters, ..Default::default() },
            energy_tol: self.discretization.energy_tol,
            time_budget: self.budgets.wall_clock_secs.map(Duration::from_secs_f64),
            ..Default::default()
        }
    }

    pub fn shooting_options(&self) -> ShootingOptions {
        ShootingOptions { step: self.discretization.step, ..Default::default() }
    }

    pub fn hamiltonian(&self) -> Option<ogc_core::Result<(NaturalHamiltonian, f64)>> {
        match &self.geometry {
            Geometry::Ellipsoid { lambdas, energy, rho } => Some(NaturalHamiltonian::ellipsoid(lambdas, *energy).map(|h| (h, *rho))),
            _ => None,
        }
    }

    /// The domain the chord solver works on; for a Hamiltonian this is the
    /// Jacobi domain at the configured ρ.
    pub fn domain(&self) -> ogc_core::Result<DomainSpec> {
        match &self.geometry {
            Geometry::SphereCap { radius, boundary } => {
                let choice = match boundary {
                    CapBoundary::Height => CapPhi::Height,
                    CapBoundary::Distance => CapPhi::Distance,
                };
                sphere_cap(*radius, choice)
            }
            Geometry::EuclideanDisk { radius } => euclidean_disk(*radius),
            Geometry::HalfPlane {} => Ok(half_plane()),
            Geometry::Ellipsoid { .. } => {
                let (ham, rho) = self.hamiltonian().expect("ellipsoid geometry")?;
                jacobi_metric(&ham, rho)
            }
        }
    }
}
