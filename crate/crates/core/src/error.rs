use thiserror::Error;

/// Errors raised by the controller library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("integration failed at t = {t}: {reason} (last state {state:?})")]
    Integration {
        t: f64,
        state: Vec<f64>,
        reason: String,
    },

    #[error("Zeno behavior: events at t = {previous} and t = {current} are closer than {min_gap}")]
    Zeno {
        previous: f64,
        current: f64,
        min_gap: f64,
    },

    #[error("QP enumeration found no KKT point although the instance is feasible (margin {margin})")]
    DegenerateQp { margin: f64 },

    #[error("control problem infeasible at t = {t} and the fallback policy aborts the run")]
    InfeasibleAbort { t: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
