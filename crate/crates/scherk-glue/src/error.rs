use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("point {0} coincides with a puncture")]
    Pole(String),
    #[error("indeterminate value at {0}")]
    Indeterminate(String),
    #[error("no puncture-avoiding path to {0}")]
    Path(String),
    #[error("local coordinate out of range: {0}")]
    Domain(String),
    #[error("node disks overlap: {0}")]
    Geometry(String),
    #[error("node parameter out of range: {0}")]
    Range(String),
    #[error("point outside the identification annulus: {0}")]
    Annulus(String),
    #[error("incompatible form data: {0}")]
    Spec(String),
    #[error("iteration did not converge: {0}")]
    Convergence(String),
    #[error("point inside a removed disk: {0}")]
    Region(String),
    #[error("root search left its basin: {0}")]
    Root(String),
    #[error("contour meets a zero: {0}")]
    Contour(String),
    #[error("singular Jacobian: {0}")]
    SingularJacobian(String),
    #[error("maximum iterations reached: {0}")]
    MaxIter(String),
    #[error("no real solution of the zeta system: {0}")]
    NoZetaSolution(String),
    #[error("solution not converged")]
    NotConverged,
    #[error("period closure failed: {0}")]
    Stitch(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
