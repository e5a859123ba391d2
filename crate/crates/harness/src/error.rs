use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Solver(#[from] radtherm_core::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, HarnessError>;

/// Process exit code: 2 for solver non-convergence, 3 for bad input, 1 for I/O.
pub fn exit_code(e: &HarnessError) -> i32 {
    match e {
        HarnessError::Config(_) => 3,
        HarnessError::Solver(s) if s.is_convergence_failure() => 2,
        HarnessError::Solver(_) => 3,
        HarnessError::Io { .. } => 1,
    }
}

pub(crate) fn config(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> HarnessError {
    let path = path.into();
    move |source| HarnessError::Io { path, source }
}
