use thiserror::Error;

/// Failure of one CLI invocation; each kind maps to one exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        Self::Usage(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Self::Data(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            Self::Data(_) => 3,
            Self::Numeric(_) => 4,
        }
    }
}

impl From<lrtrack::Error> for CliError {
    fn from(e: lrtrack::Error) -> Self {
        match e {
            lrtrack::Error::InvalidArgument(m) => Self::Data(m),
            lrtrack::Error::NumericFailure(m) => Self::Numeric(m),
        }
    }
}
