use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("entry ({row}, {col}) out of range for a {m}x{n} matrix")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        m: usize,
        n: usize,
    },
    #[error("duplicate entry at ({row}, {col})")]
    DuplicateEntry { row: usize, col: usize },
    #[error("row {0} has no nonzero entries")]
    ZeroRow(usize),
    #[error("column {0} has no nonzero entries; drop that variable before augmenting")]
    ZeroColumn(usize),
    #[error("matrix rows are not normalized to unit length")]
    NotNormalized,
    #[error("power iteration did not converge within {0} iterations")]
    PowerIterationDiverged(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("iterate became non-finite after {0} updates")]
    NonFinite(u64),
    #[error("component {t} is not in the support of row {row}")]
    ComponentNotInSupport { row: usize, t: usize },
    #[error("system is inconsistent: residual {0:e} remains after projection")]
    Inconsistent(f64),
    #[error("{m}x{n} exceeds the dense size cap of {cap} entries")]
    TooLarge { m: usize, n: usize, cap: usize },
    #[error("rho must exceed 1 when tau > 0 (got {0})")]
    InvalidRho(f64),
    #[error("missing statistic: {0}")]
    MissingStats(&'static str),
    #[error("step {gamma} is not below 2/psi = {limit}")]
    StepTooLarge { gamma: f64, limit: f64 },
    #[error("smallest nonzero eigenvalue is zero or unavailable")]
    ZeroLambdaMin,
    #[error("invalid step size {0}")]
    InvalidGamma(f64),
    #[error("rate fit needs strictly positive data")]
    NonPositiveData,
    #[error("sigma_r must be positive (got {0})")]
    NonPositiveSigma(f64),
    #[error("smallest nonzero singular value unavailable; pass it explicitly")]
    SigmaUnavailable,
    #[error("infeasible generator spec: {0}")]
    InfeasibleSpec(String),
    #[error("failed to spawn worker thread: {0}")]
    ThreadSpawnFailure(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable name of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::IndexOutOfRange { .. } => "IndexOutOfRange",
            Error::DuplicateEntry { .. } => "DuplicateEntry",
            Error::ZeroRow(_) => "ZeroRow",
            Error::ZeroColumn(_) => "ZeroColumn",
            Error::NotNormalized => "NotNormalized",
            Error::PowerIterationDiverged(_) => "PowerIterationDiverged",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::NonFinite(_) => "NonFinite",
            Error::ComponentNotInSupport { .. } => "ComponentNotInSupport",
            Error::Inconsistent(_) => "Inconsistent",
            Error::TooLarge { .. } => "TooLarge",
            Error::InvalidRho(_) => "InvalidRho",
            Error::MissingStats(_) => "MissingStats",
            Error::StepTooLarge { .. } => "StepTooLarge",
            Error::ZeroLambdaMin => "ZeroLambdaMin",
            Error::InvalidGamma(_) => "InvalidGamma",
            Error::NonPositiveData => "NonPositiveData",
            Error::NonPositiveSigma(_) => "NonPositiveSigma",
            Error::SigmaUnavailable => "SigmaUnavailable",
            Error::InfeasibleSpec(_) => "InfeasibleSpec",
            Error::ThreadSpawnFailure(_) => "ThreadSpawnFailure",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::Parse { .. } => "Parse",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
        }
    }
}

pub(crate) fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::DimensionMismatch(format!(
            "{what} has length {got}, expected {want}"
        )));
    }
    Ok(())
}
