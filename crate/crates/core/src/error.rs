use thiserror::Error;

pub type Result<T, E = OgcError> = std::result::Result<T, E>;

/// Every failure the solvers can report.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum OgcError {
    #[error("point {0:?} lies outside the chart domain")]
    OutOfChart(Vec<f64>),
    #[error("metric is not positive definite at {0:?}")]
    NotPositiveDefinite(Vec<f64>),
    #[error("geodesic left the chart at t = {t}")]
    LeftChart { t: f64 },
    #[error("integration step too large: relative speed drift {drift:e}")]
    StepTooLarge { drift: f64 },
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("endpoints too far apart: {dist} exceeds bound {bound}")]
    TooFarApart { dist: f64, bound: f64 },
    #[error("degenerate sample region: {0}")]
    DegenerateRegion(String),
    #[error("point is not on the boundary (phi = {phi:e})")]
    NotOnBoundary { phi: f64 },
    #[error("vector is not tangent to the boundary (g(grad phi, v) = {defect:e})")]
    NotTangent { defect: f64 },
    #[error("flow left the shell at tau = {tau}")]
    LeftShell { tau: f64 },
    #[error("point outside the shell (phi = {phi})")]
    OutOfShell { phi: f64 },
    #[error("empty interval [{a}, {b}]")]
    EmptyInterval { a: f64, b: f64 },
    #[error("curve endpoints are not outside the open domain")]
    NotInM0,
    #[error("path family is empty")]
    EmptyFamily,
    #[error("precondition unmet: {0}")]
    PreconditionUnmet(String),
    #[error("bad interval: {0}")]
    BadInterval(String),
    #[error("portion is not critical (residual {residual:e} above threshold {threshold:e})")]
    NotCritical { residual: f64, threshold: f64 },
    #[error("velocity does not jump across the contact run")]
    NotACusp,
    #[error("bad depths: delta = {delta}, d = {d}")]
    BadDepths { delta: f64, d: f64 },
    #[error("curve is not delta-bar-close on [{alpha}, {beta}]")]
    NotDeltaBarClose { alpha: f64, beta: f64 },
    #[error("interval is within the criticality band (residual {residual:e})")]
    TooCloseToCritical { residual: f64 },
    #[error("interval too short: (b - a) * energy = {product:e} below {bound:e}")]
    ShortInterval { product: f64, bound: f64 },
    #[error("an interval energy reached M0")]
    LeftM,
    #[error("degenerate split point")]
    DegenerateSplit,
    #[error("no second-type portion with nonzero energy transfer")]
    NotSecondType,
    #[error("no topologically non-essential interval")]
    NoNonessential,
    #[error("deformation stalled at level {level} (best residual {residual:e})")]
    Stalled { level: f64, residual: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("a current curve left the energy sublevel M")]
    CurveLeftM,
    #[error("homotopies do not match at the junction")]
    Mismatch,
    #[error("domain is not strongly concave: {0}")]
    NotConcave(String),
    #[error("energy drift {drift:e} exceeds tolerance")]
    EnergyDrift { drift: f64 },
    #[error("bad shrink parameter rho: {0}")]
    BadRho(String),
    #[error("shooting diverged: {0}")]
    ShootingDiverged(String),
    #[error("a frequency lambda is zero")]
    ZeroLambda,
}
