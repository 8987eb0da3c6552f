use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid size {n}: {reason}")]
    InvalidSize { n: usize, reason: String },

    #[error("size mismatch: expected {expected}, found {found}")]
    SizeMismatch { expected: usize, found: usize },

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("singular channel: {0}")]
    SingularChannel(String),

    #[error("no power-feasible noise level: {0}")]
    InfeasiblePower(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("scheme mismatch: {0}")]
    SchemeMismatch(String),

    #[error("demand infeasible for flow {flow}: {reason}")]
    DemandInfeasible { flow: String, reason: String },

    #[error("channel stream degenerate after {redraws} redraws")]
    DegenerateChannelStream { redraws: usize },

    #[error("out of range: {0}")]
    Range(String),

    #[error("parse error at line {line}, column {column}: {msg}")]
    Parse { line: usize, column: usize, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Short machine-readable tag used in CLI diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidSize { .. } => "invalid-size",
            Error::SizeMismatch { .. } => "size-mismatch",
            Error::InvalidPermutation(_) => "invalid-permutation",
            Error::InvalidParams(_) => "invalid-params",
            Error::SingularChannel(_) => "singular-channel",
            Error::InfeasiblePower(_) => "infeasible-power",
            Error::Domain(_) => "domain",
            Error::SchemeMismatch(_) => "scheme-mismatch",
            Error::DemandInfeasible { .. } => "demand-infeasible",
            Error::DegenerateChannelStream { .. } => "degenerate-channel-stream",
            Error::Range(_) => "range",
            Error::Parse { .. } => "parse",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }

    /// Errors raised by the model itself rather than by malformed input.
    pub fn is_domain(&self) -> bool {
        matches!(
            self,
            Error::SingularChannel(_)
                | Error::InfeasiblePower(_)
                | Error::Domain(_)
                | Error::SchemeMismatch(_)
                | Error::DemandInfeasible { .. }
                | Error::DegenerateChannelStream { .. }
                | Error::Range(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
