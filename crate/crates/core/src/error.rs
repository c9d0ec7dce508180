//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("matrix not positive definite: {0}")]
    NonPositive(String),

    #[error("form degree out of range: {0}")]
    DegreeOutOfRange(String),

    #[error("flux twist obstruction: {0}")]
    TwistObstruction(String),

    #[error("integrability residual {residual:e} exceeds tolerance {tolerance:e}")]
    IntegrabilityViolation { residual: f64, tolerance: f64 },

    #[error("gauge transformation singular at site {site}")]
    SingularGauge { site: usize },

    #[error("bundle metric lost positivity at t = {t} (site {site}, min eigenvalue {min_eig:e})")]
    PositivityLost { t: f64, site: usize, min_eig: f64 },

    #[error("curvature blow-up at t = {t}: sup|F| = {sup:e} exceeds ceiling {ceiling:e}")]
    Blowup { t: f64, sup: f64, ceiling: f64 },

    #[error("time step {dt:e} violates stability bound {bound:e}")]
    CflViolation { dt: f64, bound: f64 },

    #[error("geometry domain violation: {0}")]
    GeometryDomain(String),

    #[error("trajectory does not cover the requested window: {0}")]
    TrajectoryCoverage(String),

    #[error("trajectories recorded on mismatched grids: {0}")]
    MismatchedGrids(String),
}

pub type Result<V> = std::result::Result<V, CoreError>;
