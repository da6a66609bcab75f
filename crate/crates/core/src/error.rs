use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("rate bound violated: q[{from}][{to}] = {rate} is not below M = {bound}")]
    RateBound {
        from: usize,
        to: usize,
        rate: f64,
        bound: f64,
    },

    /// A trajectory left the finite region; `step` is the index of the step
    /// that produced the offending state.
    #[error("path diverged at step {step}")]
    Divergence { step: usize },

    #[error("model `{model}` does not provide {what}")]
    MissingCapability { model: String, what: &'static str },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("estimation failed: all {0} paths aborted")]
    EstimationFailed(usize),

    #[error("quadrature did not converge: relative change {0:.3e}")]
    Quadrature(f64),

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },
}

impl Error {
    pub fn is_divergence(&self) -> bool {
        matches!(self, Error::Divergence { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
