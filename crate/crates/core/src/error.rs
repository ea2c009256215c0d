use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("state vector is not normalized (|norm^2 - 1| = {deviation:e})")]
    Unnormalized { deviation: f64 },

    #[error("detuning of the C transition is zero; the dressed-state expansion is undefined")]
    DivisionByZeroDetuning,

    #[error("R-laser Rabi frequency is zero; dark-state mixing ratio is undefined")]
    ZeroRabiR,

    #[error("no planar phase-matching solution: {0}")]
    NoSolution(String),

    #[error("invalid pulse schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("step size underflow at t = {t} us (h = {h:e} us)")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("trace drifted to {trace} at t = {t} us")]
    InvariantBreach { t: f64, trace: f64 },

    #[error("threshold not reached within {horizon} us")]
    Timeout { horizon: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
