use thiserror::Error;

/// Coarse classification used by callers (mainly the CLI) to map failures
/// onto exit codes without matching every variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad arguments or configuration supplied by the caller.
    Usage,
    /// Input data failed validation or could not be read.
    Data,
    /// The computation itself broke down (singular systems, degenerate designs).
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid bandwidth {value}: bandwidths must lie in (0, 0.5]")]
    InvalidBandwidth { value: f64 },

    #[error("invalid configuration: {reason}")]
    InvalidConfig { reason: String },

    #[error("dimension mismatch: {reason}")]
    DimensionMismatch { reason: String },

    #[error("empty sample")]
    EmptySample,

    #[error("sample too small: need at least {need} rows, got {got}")]
    SampleTooSmall { need: usize, got: usize },

    #[error("covariate {col} of row {row} is {value}, outside [0, 1]")]
    DomainViolation { row: usize, col: usize, value: f64 },

    #[error("non-finite value in covariate {col} of row {row}")]
    NonFinite { row: usize, col: usize },

    #[error(
        "ill-conditioned local design for covariate {covariate} at grid point {grid_point}: \
         minimum eigenvalue {min_eigenvalue:.3e} below 1e-8"
    )]
    IllConditioned {
        covariate: usize,
        grid_point: f64,
        min_eigenvalue: f64,
    },

    #[error("degenerate marginal for covariate {covariate}: integrated density is zero")]
    DegenerateMarginal { covariate: usize },

    #[error("zero-variance response")]
    ZeroVarianceResponse,

    #[error("candidate source '{label}' too small for detection: {n} rows < 10")]
    InsufficientCandidate { label: String, n: usize },

    #[error("penalty selection failed: no grid value produced a valid fit")]
    SelectionFailed,

    #[error("Monte-Carlo size {got} too small: need at least {need}")]
    MonteCarloTooSmall { need: usize, got: usize },

    #[error("auxiliary population label must be 1 or 2, got {got}")]
    UnknownPopulation { got: usize },

    #[error("missing response column '{name}'")]
    MissingResponse { name: String },

    #[error("csv file has no header row or no data rows")]
    EmptyTable,

    #[error("{path} looks headerless: every field of the first row is numeric")]
    MissingHeader { path: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv parse error on {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },

    #[error("artifact error: {reason}")]
    Artifact { reason: String },

    #[error("scenario config error: {reason}")]
    Scenario { reason: String },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            InvalidBandwidth { .. }
            | InvalidConfig { .. }
            | MonteCarloTooSmall { .. }
            | UnknownPopulation { .. }
            | Scenario { .. } => ErrorClass::Usage,
            DimensionMismatch { .. }
            | EmptySample
            | SampleTooSmall { .. }
            | DomainViolation { .. }
            | NonFinite { .. }
            | InsufficientCandidate { .. }
            | MissingResponse { .. }
            | EmptyTable
            | MissingHeader { .. }
            | Io { .. }
            | Csv { .. }
            | Artifact { .. } => ErrorClass::Data,
            IllConditioned { .. }
            | DegenerateMarginal { .. }
            | ZeroVarianceResponse
            | SelectionFailed => ErrorClass::Numerical,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
