use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad shapes, out-of-range values, malformed configs.
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("singular value iteration did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    #[error("non-finite gradient in parameter block `{block}` at step {step}")]
    NonFiniteGradient { block: String, step: usize },

    #[error(
        "training diverged at step {step}{}",
        last_good_step.map(|s| format!(" (last finite loss at step {s})")).unwrap_or_default()
    )]
    Diverged {
        step: usize,
        last_good_step: Option<usize>,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Some grid runs failed; the others completed and were written.
    #[error("{} grid run(s) failed: {}", .0.len(), .0.join("; "))]
    GridFailures(Vec<String>),

    #[error("malformed {what}: {message}")]
    Parse { what: String, message: String },
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this failure class: 2 config, 3 io, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Parse { .. } => 2,
            Error::Io { .. } => 3,
            Error::NoConvergence { .. }
            | Error::NonFiniteGradient { .. }
            | Error::Diverged { .. }
            | Error::GridFailures(_) => 4,
        }
    }

    pub fn is_numerical(&self) -> bool {
        self.exit_code() == 4
    }
}
