use thiserror::Error;

/// Errors raised anywhere in the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape error: expected {expected} slots, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("depth budget exhausted at {site}: needs level {needed}, budget is {budget}")]
    DepthExhausted {
        site: String,
        needed: u32,
        budget: u32,
    },

    #[error("authorization error: {0}")]
    Authorization(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("data fault: {0}")]
    DataFault(String),

    #[error("internal consistency error: {0}")]
    Consistency(String),

    #[error("wire format error: {0}")]
    Wire(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable category, used by the CLI's one-line error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Shape { .. } => "shape",
            Error::Protocol(_) => "protocol",
            Error::DepthExhausted { .. } => "depth",
            Error::Authorization(_) => "authorization",
            Error::Range(_) => "range",
            Error::DataFault(_) => "data_fault",
            Error::Consistency(_) => "consistency",
            Error::Wire(_) => "wire",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }

    /// Prefix the site of a depth-budget error with an outer call site.
    pub fn at(self, outer: impl AsRef<str>) -> Self {
        match self {
            Error::DepthExhausted {
                site,
                needed,
                budget,
            } => Error::DepthExhausted {
                site: format!("{} > {}", outer.as_ref(), site),
                needed,
                budget,
            },
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
