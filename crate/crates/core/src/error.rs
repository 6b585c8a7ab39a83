use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid physics: spring {spring} has non-positive stiffness {stiffness} at T = {temperature} °C")]
    InvalidPhysics {
        spring: usize,
        temperature: f64,
        stiffness: f64,
    },

    #[error("invalid structure: {0}")]
    InvalidStructure(String),

    #[error("temperature {temperature} °C outside valid range [{min}, {max}]")]
    TemperatureOutOfRange { temperature: f64, min: f64, max: f64 },

    #[error("singular dynamic stiffness at {frequency} Hz")]
    SingularSystem { frequency: f64 },

    #[error("time integration diverged at step {step}")]
    Divergence { step: usize },

    #[error("time step {dt} too large: dt * omega_max = {product:.3} (limit 0.5)")]
    UnstableStep { dt: f64, product: f64 },

    #[error("frequency {target} Hz outside curve range [{min}, {max}]")]
    FrequencyOutOfRange { target: f64, min: f64, max: f64 },

    #[error("non-finite value produced by `{op}` (node {node})")]
    NonFinite { op: &'static str, node: usize },

    #[error("non-finite loss at epoch {epoch}, task {task}")]
    NonFiniteLoss { epoch: usize, task: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("empty context set")]
    EmptyContext,

    #[error("kernel matrix not positive definite after jitter {jitter:e}")]
    NotPositiveDefinite { jitter: f64 },

    #[error("degenerate target: observations have zero variance")]
    DegenerateTarget,

    #[error("requested {requested} components but data rank is {rank}")]
    RankDeficient { requested: usize, rank: usize },

    #[error("invalid configuration: {field}: {message}")]
    Config { field: String, message: String },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("no usable candidate: {0}")]
    NoCandidate(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics rather than of inputs or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularSystem { .. }
                | Error::Divergence { .. }
                | Error::NonFinite { .. }
                | Error::NonFiniteLoss { .. }
                | Error::NotPositiveDefinite { .. }
                | Error::NoCandidate(_)
        )
    }
}
