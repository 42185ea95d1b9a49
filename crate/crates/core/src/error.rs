use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("index {index} out of range for {what} of length {len}")]
    OutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("unknown register `{0}`")]
    UnknownRegister(String),

    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),

    #[error("invalid rotation: constant {c} exceeds smallest estimate {min_beta}")]
    InvalidRotation { c: f64, min_beta: f64 },

    #[error("post-selection success probability {p:e} below floor {floor:e}")]
    VanishingSuccess { p: f64, floor: f64 },

    #[error("weak anchor: component {component} has estimated coefficient {beta_hat:e} below floor {floor:e}")]
    WeakAnchor {
        component: usize,
        beta_hat: f64,
        floor: f64,
    },

    #[error("spectrum under-sampled: {found} of {wanted} components after {shots} shots")]
    UnderSampled { found: usize, wanted: usize, shots: usize },

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("degenerate regression: {0}")]
    DegenerateRegression(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Stable machine-readable code, used by the CLI error object.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "INVALID_INPUT",
            Error::NumericalFailure(_) => "NUMERICAL_FAILURE",
            Error::OutOfRange { .. } => "OUT_OF_RANGE",
            Error::ContractViolation(_) => "CONTRACT_VIOLATION",
            Error::UnknownRegister(_) => "UNKNOWN_REGISTER",
            Error::DegenerateSpectrum(_) => "DEGENERATE_SPECTRUM",
            Error::InvalidRotation { .. } => "INVALID_ROTATION",
            Error::VanishingSuccess { .. } => "VANISHING_SUCCESS",
            Error::WeakAnchor { .. } => "WEAK_ANCHOR",
            Error::UnderSampled { .. } => "UNDER_SAMPLED",
            Error::SingularSystem(_) => "SINGULAR_SYSTEM",
            Error::DegenerateRegression(_) => "DEGENERATE_REGRESSION",
            Error::Parse { .. } => "PARSE_ERROR",
            Error::Io(_) => "IO_ERROR",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
