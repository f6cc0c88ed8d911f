use std::path::PathBuf;

use thiserror::Error;

/// Every failure the toolkit can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed template at byte {offset}: {reason}")]
    MalformedTemplate { offset: usize, reason: String },

    #[error("template has {found} players, the cap is {cap}")]
    TooManyPlayers { found: usize, cap: usize },

    #[error("variable `{0}` is not bound")]
    UnboundVariable(String),

    #[error("coalition mask has width {got}, template has {expected} players")]
    MaskWidthMismatch { expected: usize, got: usize },

    #[error("distribution has no positive mass to normalize")]
    AllZero,

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid option set: {0}")]
    InvalidOptions(String),

    #[error("invalid oracle configuration: {0}")]
    InvalidConfig(String),

    #[error("prompt is empty")]
    EmptyPrompt,

    #[error("network error: {0}")]
    Network(String),

    #[error("authentication rejected: {0}")]
    Auth(String),

    #[error("malformed response: {0}")]
    MalformedResponse(String),

    #[error("offline mode: no cached response for key {key}")]
    CacheMiss { key: String },

    #[error("attribution needs at least one player")]
    NoPlayers,

    #[error("shapley weight out of range: n={n}, s={s}")]
    OutOfRange { n: usize, s: usize },

    #[error("{found} players exceeds the cap of {cap} for this method")]
    PlayerCapExceeded { found: usize, cap: usize },

    #[error("need at least {min} permutations, got {got}")]
    TooFewPermutations { got: usize, min: usize },

    #[error("window {window} exceeds series of length {len}")]
    WindowExceedsSeries { window: usize, len: usize },

    #[error("invalid sweep: {0}")]
    InvalidSweep(String),

    #[error("sweep interrupted at x={resume_at} after {} points: {source}", partial.len())]
    SweepInterrupted {
        partial: crate::probes::SweepSeries,
        resume_at: i64,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid series: {0}")]
    InvalidSeries(String),

    #[error("invalid probe: {0}")]
    InvalidProbe(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Whether the failure came from talking to the model (as opposed to a
    /// bad argument or a local file problem).
    pub fn is_oracle_failure(&self) -> bool {
        match self {
            Error::Network(_)
            | Error::Auth(_)
            | Error::MalformedResponse(_)
            | Error::CacheMiss { .. } => true,
            Error::SweepInterrupted { source, .. } => source.is_oracle_failure(),
            _ => false,
        }
    }

    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
