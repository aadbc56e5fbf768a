//! Error types shared across the simulator.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    /// Invalid configuration value. Carries the offending key path.
    #[error("config error at `{key}`: {msg}")]
    Config { key: String, msg: String },

    /// A deployment could not be generated (e.g. street too short).
    #[error("deployment error: {0}")]
    Deployment(String),

    /// Unknown material id or malformed material table.
    #[error("material registry error: {0}")]
    Material(String),

    /// Invalid argument to a propagation routine.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("config parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, SimError>;

impl SimError {
    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        SimError::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }
}
