use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error("profile error: {0}")]
    Profile(String),
    #[error("tail-fit error: {0}")]
    TailFit(String),
    #[error("inversion error: {0}")]
    Inversion(String),
    #[error("construction error: {0}")]
    Construction(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("integrator failure: {0}")]
    Integrator(String),
    #[error("shooting error: {0}")]
    Shooting(String),
    #[error("stiffness error: {0}")]
    Stiffness(String),
    #[error("solver fault: {0}")]
    SolverFault(String),
    #[error("decomposition error: {0}")]
    Decomposition(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("file error: {0}")]
    File(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;
