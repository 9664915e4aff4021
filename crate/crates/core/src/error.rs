use thiserror::Error;

/// Errors raised anywhere in the pipeline.
///
/// The CLI maps these onto exit codes through [`Error::exit_code`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("measure has zero total mass")]
    ZeroMass,
    #[error("boundary fraction {fraction} for atom {index} is outside [0, 1]")]
    InvalidFraction { index: usize, fraction: f64 },
    #[error("total masses differ: {left} vs {right}")]
    MassMismatch { left: f64, right: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("LP solver failure: {0}")]
    SolverFailure(String),
    #[error("product outcome space too large: {size} > {limit}")]
    SizeOverflow { size: u128, limit: u128 },
    #[error("LP infeasible: {0}")]
    Infeasible(String),
    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NewtonDivergence { iterations: usize, residual: f64 },
    #[error("no exact e-variable exists: {0}")]
    InfeasibleExactness(String),
    #[error("measure is concentrated at a single diagonal point")]
    DegenerateNode,
    #[error("separating residual never changes sign{}", path_suffix(.path))]
    NoSignChange { path: String },
    #[error("point {0:?} cannot be routed through the split tree")]
    UnroutablePoint(Vec<f64>),
    #[error("zero-mass child pair below node {0}")]
    ZeroMassChildren(usize),
}

fn path_suffix(path: &str) -> String {
    if path.is_empty() {
        String::new()
    } else {
        format!(" at node {path}")
    }
}

impl Error {
    /// Exit-code contract: 2 input, 3 solver, 4 geometry, 5 infeasible.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ZeroMass
            | Error::InvalidFraction { .. }
            | Error::MassMismatch { .. }
            | Error::DimMismatch { .. }
            | Error::InvalidInput(_)
            | Error::SizeOverflow { .. } => 2,
            Error::SolverFailure(_) | Error::NewtonDivergence { .. } => 3,
            Error::DegenerateNode
            | Error::NoSignChange { .. }
            | Error::UnroutablePoint(_)
            | Error::ZeroMassChildren(_) => 4,
            Error::Infeasible(_) | Error::InfeasibleExactness(_) => 5,
        }
    }

    /// Attach a tree-node path to geometry errors raised deep inside a split.
    pub(crate) fn at_node(self, node_path: &str) -> Self {
        match self {
            Error::NoSignChange { .. } => Error::NoSignChange { path: node_path.to_string() },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
