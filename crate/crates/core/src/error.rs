use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("grid too small: need at least {min} points per axis, got {got}")]
    GridTooSmall { min: usize, got: usize },
    #[error("field has {got} components, expected {expected}")]
    WrongDimension { expected: usize, got: usize },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },
    #[error("rational map is reducible (resultant {0:.3e})")]
    Reducible(f64),
    #[error("quadrature did not reach tolerance {tol:.3e} (estimate {achieved:.3e})")]
    Quadrature { tol: f64, achieved: f64 },
    #[error("vector is not on the unit sphere (|w| = {0})")]
    NotUnit(f64),
    #[error("Ricci tensor does not match the Riemann trace (mismatch {0:.3e})")]
    TraceMismatch(f64),
    #[error("frame degenerates at grid point ({0}, {1})")]
    FrameDegenerate(usize, usize),
    #[error("field is not an approximate linearized solution (defect {0:.3e})")]
    NotLinearized(f64),
    #[error("no spectral gap detected among the smallest singular values")]
    NoSpectralGap,
    #[error("point lies too close to the grid boundary")]
    NearBoundary,
    #[error("source does not decay on the boundary ring (max {0:.3e})")]
    NoDecay(f64),
    #[error("linear solve failed: {0}")]
    LinearSolve(String),
    #[error("immersion degenerates: {0}")]
    Degenerate(String),
    #[error("scale {0:.3e} is below grid resolution")]
    BelowResolution(f64),
    #[error("extraction did not converge within {0} bubbles")]
    NoConvergence(usize),
    #[error("curvature expansion leaves its domain (|eps u| = {0:.3})")]
    ExpansionDomain(f64),
    #[error("newton iteration failed: {0}")]
    Newton(String),
    #[error("remainder too large to interpret (defect {0:.3e})")]
    DefectTooLarge(f64),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name: name.to_string(), reason: reason.into() }
}
