use thiserror::Error;

/// Errors raised by the simulator, the branching processes and the oracles.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("population size must be at least 16 for the width and time scales (got {0})")]
    ScalesUndefined(usize),

    #[error("invalid event: {0}")]
    InvalidEvent(String),

    #[error("event cap of {cap} exceeded at time {time}")]
    EventCapExceeded { cap: u64, time: f64 },

    #[error("particle cap of {cap} exceeded at time {time} (population {population})")]
    ParticleCapExceeded {
        cap: u64,
        time: f64,
        population: u64,
    },

    #[error("bound undefined: {0}")]
    BoundUndefined(String),

    #[error("series mismatch: {0}")]
    SeriesMismatch(String),

    #[error("state space too large: {states} states exceeds the limit {limit}")]
    StateSpaceTooLarge { states: usize, limit: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
