use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Bad static configuration (dimensions, parameter vector lengths, invalid settings).
    #[error("configuration error: {0}")]
    Config(String),

    /// Bad runtime input to an operation (unsorted times, non-normalized states, ...).
    #[error("input error: {0}")]
    Input(String),

    /// Line-anchored failure while parsing a config or system-definition file.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// A point handed to a surrogate map lies outside the map's domain.
    #[error("map domain error: {0}")]
    Domain(String),

    /// Surrogate-map construction failed.
    #[error("map build error: {0}")]
    MapBuild(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
