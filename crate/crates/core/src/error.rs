use alloc::string::String;

/// Errors produced by the estimation pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("drift CFL violated: dt = {dt:e} exceeds the admissible {required:e} (max |K*u| = {max_speed:e})")]
    Cfl {
        dt: f64,
        required: f64,
        max_speed: f64,
    },

    #[error("{what} diverged at step {step}")]
    Divergence { what: &'static str, step: usize },

    #[error("empty support: no node has density above {threshold:e}")]
    EmptySupport { threshold: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("degenerate L-curve: {0}")]
    DegenerateCurve(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
