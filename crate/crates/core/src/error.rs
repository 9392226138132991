use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("audit failure in {assumption}: {inequality} violated at {witness} ({lhs} > {rhs})")]
    AuditFailure {
        assumption: String,
        inequality: String,
        witness: String,
        lhs: f64,
        rhs: f64,
    },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("invalid preset parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("non-finite value in {what} at t = {t}")]
    NumericalBlowup { what: String, t: f64 },

    #[error("path starts outside the closed domain")]
    StartOutsideDomain,

    #[error("noise record missing for a trajectory with epsilon = {0}")]
    MissingNoise(f64),

    #[error("fixed-point iteration did not converge at t = {t}, x = {x:?}")]
    FixedPointDivergence { t: f64, x: Vec<f64> },

    #[error("point {point:?} at t = {t} lies outside the lattice")]
    OutOfLattice { t: f64, point: Vec<f64> },

    #[error("diffusion is singular at node {node}: smallest eigenvalue {min_eigenvalue:e}")]
    SingularDiffusion { node: usize, min_eigenvalue: f64 },

    #[error("path leaves the closed domain at node {node}")]
    InfeasiblePath { node: usize },

    #[error("constraint violation {violation:e} exceeds tolerance {tolerance:e}")]
    ConstraintInfeasible { violation: f64, tolerance: f64 },

    #[error("relative standard error {rel_se:.3} at epsilon = {epsilon} exceeds {limit}")]
    InsufficientPaths { epsilon: f64, rel_se: f64, limit: f64 },

    #[error("degenerate log-log fit: {0}")]
    DegenerateFit(String),

    #[error("invalid config at {field}: {reason}")]
    ConfigInvalid { field: String, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Stable machine-readable name, used in `error.json` and by the C ABI.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidShape(_) => "InvalidShape",
            Error::AuditFailure { .. } => "AuditFailure",
            Error::UnknownPreset(_) => "UnknownPreset",
            Error::InvalidParameter { .. } => "InvalidParameter",
            Error::NumericalBlowup { .. } => "NumericalBlowup",
            Error::StartOutsideDomain => "StartOutsideDomain",
            Error::MissingNoise(_) => "MissingNoise",
            Error::FixedPointDivergence { .. } => "FixedPointDivergence",
            Error::OutOfLattice { .. } => "OutOfLattice",
            Error::SingularDiffusion { .. } => "SingularDiffusion",
            Error::InfeasiblePath { .. } => "InfeasiblePath",
            Error::ConstraintInfeasible { .. } => "ConstraintInfeasible",
            Error::InsufficientPaths { .. } => "InsufficientPaths",
            Error::DegenerateFit(_) => "DegenerateFit",
            Error::ConfigInvalid { .. } => "ConfigInvalid",
            Error::InvalidInput(_) => "InvalidInput",
            Error::Io(_) => "Io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
