use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("endpoints not increasing")]
    EndpointsNotIncreasing,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("domain unresolved at this ε/h")]
    DomainUnresolved,
    #[error("discretization failure")]
    Discretization,
    #[error("source unresolved")]
    SourceUnresolved,
    #[error("resonance at this discretization")]
    Resonance,
    #[error("outside contraction regime; decrease ε or refine grid")]
    NoContraction,
    #[error("no interior minimum at this resolution")]
    NoInteriorMinimum,
    #[error("correction out of contraction regime")]
    CorrectionOverflow,
    #[error("m ≤ d required")]
    TooManyPoints,
    #[error("singular input: {0}")]
    Singular(String),
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("ansatz infeasible: at most {0} points fit")]
    Infeasible(usize),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
