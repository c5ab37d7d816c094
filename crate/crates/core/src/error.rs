use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("non-finite value at iteration {iteration}")]
    Numerical { iteration: usize },

    #[error("restart {restart} failed: non-finite value at iteration {iteration}")]
    RestartFailed { restart: usize, iteration: usize },

    #[error("{failed} of {total} restarts failed")]
    Ensemble { failed: usize, total: usize },

    #[error("all signature vectors are identical; clusters cannot be separated")]
    SingleCluster,

    #[error("cluster {0} has no members")]
    EmptyCluster(usize),

    #[error("every k in the sweep failed")]
    SweepFailed,
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    /// True for failures of the numerical iteration rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Numerical { .. }
                | Error::RestartFailed { .. }
                | Error::Ensemble { .. }
                | Error::SweepFailed
        )
    }
}
