use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter r = {r} for {family} distortion: {reason}")]
    DistortionParam {
        family: &'static str,
        r: f64,
        reason: &'static str,
    },

    #[error("argument {value} outside [0, 1] for distortion evaluation")]
    DistortionDomain { value: f64 },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("empty sample or batch")]
    Empty,

    #[error("return {ret} exceeds the supplied bound M_r = {bound}")]
    ReturnExceedsBound { ret: f64, bound: f64 },

    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("malformed layout: {0}")]
    Layout(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("policy dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("behavior policy assigns zero probability to action {action} in state {state}")]
    ZeroBehaviorProbability { state: usize, action: usize },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("non-finite parameter after iteration {iteration} (grad norm {grad_norm})")]
    NonFinite { iteration: usize, grad_norm: f64 },

    #[error("episode atlas exceeds limit of {limit} episodes")]
    AtlasOverflow { limit: usize },

    #[error("enumerated probability mass {mass} does not sum to one")]
    ProbabilityLeak { mass: f64 },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
