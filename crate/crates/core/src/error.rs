use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("points {first} and {second} of the tuple coincide")]
    DuplicatePoint { first: usize, second: usize },

    #[error("training inputs {first} and {second} coincide")]
    DuplicateInput { first: usize, second: usize },

    #[error("training targets {first} and {second} coincide")]
    DuplicateTarget { first: usize, second: usize },

    #[error("{kind} {index} lies outside the region")]
    OutOfRegion { kind: &'static str, index: usize },

    #[error("trajectory blew up at step {step} (state norm {norm:e})")]
    BlowUp { step: usize, norm: f64 },

    #[error("numeric bracket words longer than 2 are not supported (word {0})")]
    WordTooLong(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
