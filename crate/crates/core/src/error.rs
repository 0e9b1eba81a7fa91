use thiserror::Error;

/// Errors raised by the policy-search toolkit and the feeder environment.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("non-finite reward for direction {direction}")]
    NonFiniteReward { direction: usize },

    #[error("non-positive voltage {value} on phase {phase}")]
    NonPositiveVoltage { phase: usize, value: f64 },

    #[error("invalid curve: {0}")]
    InvalidCurve(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("rollout failed (direction {direction}, sign {sign:+}, episode {episode}): {source}")]
    Rollout {
        direction: usize,
        sign: i8,
        episode: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("environment: {0}")]
    Environment(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            got,
        })
    }
}

pub(crate) fn check_finite(what: &'static str, xs: &[f64]) -> Result<()> {
    match xs.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(Error::NonFinite { what, index }),
        None => Ok(()),
    }
}
