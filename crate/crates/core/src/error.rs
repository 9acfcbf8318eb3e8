use std::path::PathBuf;

use thiserror::Error;

use crate::mdp::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {}", join_violations(.0))]
    InvalidModel(Vec<Violation>),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error(
        "enumeration refused: n_states^(T+1) * n_actions^T = {size:e} exceeds the bound {bound:e} (T = {horizon})"
    )]
    EnumerationTooLarge {
        size: f64,
        bound: f64,
        horizon: usize,
    },

    #[error("horizon must be at least 1")]
    ZeroHorizon,

    #[error("index out of bounds: {0}")]
    IndexOutOfBounds(String),

    #[error("probability {0} outside (0, 1]")]
    InvalidProbability(f64),

    #[error("battery level {0} outside [0, 100]")]
    BatteryOutOfRange(f64),

    #[error("variational trajectory has positive mass where the prior has none (KL undefined)")]
    KlUndefined,

    #[error("posterior normalizer underflow at t = {time}, state = {state}")]
    NormalizerUnderflow { time: usize, state: usize },

    #[error("non-finite reward {0}")]
    NonFiniteReward(f64),

    #[error("invalid observation field {field}: {value}")]
    InvalidObservation { field: &'static str, value: i64 },

    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("checkpoint line {line}: {message}")]
    Checkpoint { line: usize, message: String },

    #[error("unsupported checkpoint version {0:?}")]
    CheckpointVersion(String),

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", .path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
