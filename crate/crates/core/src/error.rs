use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error("integral may diverge: {0}")]
    Divergent(String),
    #[error("empty admissible set Z: {0}")]
    EmptyAdmissible(String),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("closed form unavailable: {0}")]
    Unavailable(String),
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("outside small-epsilon regime: {0}")]
    BlowUp(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable category used in manifests and exit codes.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidParam(_) | Error::InvalidField(_) | Error::Config(_) => "usage",
            Error::Divergent(_) | Error::NoConvergence(_) | Error::BlowUp(_) => "numerical",
            Error::EmptyAdmissible(_) | Error::Hypothesis(_) | Error::Unavailable(_) => "domain",
            Error::Io(_) | Error::Json(_) => "io",
            Error::Internal(_) => "internal",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "usage" => 2,
            "numerical" => 3,
            "domain" => 4,
            "io" => 5,
            _ => 70,
        }
    }
}
