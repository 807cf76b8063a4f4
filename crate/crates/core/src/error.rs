use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("geometry: {0}")]
    Geometry(String),

    #[error("invalid allocation: {0}")]
    InvalidAllocation(String),

    /// A rate fell below 1 bps so the matching step duration is unbounded.
    #[error("{which} rate {rate:.3e} bps is too small to carry the payload")]
    ZeroRate { which: &'static str, rate: f64 },

    #[error("bound construction: {0}")]
    Bound(String),

    #[error("conic program: {0}")]
    Program(String),

    #[error("config: {0}")]
    Config(String),

    #[error("undefined gain: half-duplex rate is zero")]
    UndefinedGain,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
