//! Numerical search for orthogonal geodesic chords in strongly concave
//! Riemannian disks, and the brake orbits they correspond to.

pub mod criticality;
pub mod domain;
pub mod error;
pub mod flows;
pub mod geometries;
pub mod geometry;
pub mod hamiltonian;
pub mod minimax;
pub mod pathspace;
pub mod variation;

pub use domain::DomainSpec;
pub use error::{OgcError, Result};
pub use flows::{ConstantsLedger, FlowStepResult, StepKind};
pub use geometry::{ChartDomain, GeodesicTrajectory, MetricField};
pub use hamiltonian::{BrakeOrbit, NaturalHamiltonian};
pub use minimax::{solve_existence, ChordResult, HomotopyState, SolveOptions, SolveReport};
pub use pathspace::{DiscreteCurve, IntervalRecord, PathFamily};
