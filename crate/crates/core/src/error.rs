use thiserror::Error;

use crate::controller::GainViolation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("inadmissible gains: {}", join_violations(.0))]
    InadmissibleGains(Vec<GainViolation>),

    #[error("infeasible gains: c1 + c2 exceeds beta0 * v_max / N by {excess}")]
    InfeasibleGains { excess: f64 },

    #[error("config error in `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("integration diverged at t = {t}; last finite state {last_state:?} at t = {last_t}")]
    Diverged { t: f64, last_t: f64, last_state: Vec<f64> },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { key: key.into(), message: message.into() }
    }
}

fn join_violations(v: &[GainViolation]) -> String {
    v.iter().map(|g| g.to_string()).collect::<Vec<_>>().join("; ")
}
