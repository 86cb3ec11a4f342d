use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] wakecough_core::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
    #[error("{0}")]
    Invalid(String),
    #[error("{cell}: {source}")]
    Cell { cell: String, source: Box<Error> },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io { path: path.to_path_buf(), source }
    }

    pub fn format(path: &Path, msg: impl ToString) -> Self {
        Error::Format { path: path.to_path_buf(), msg: msg.to_string() }
    }

    pub fn in_cell(self, cell: impl Into<String>) -> Self {
        Error::Cell { cell: cell.into(), source: Box::new(self) }
    }

    /// True when the failure is caused by the caller's input (exit code 2)
    /// rather than by a numerical or internal fault (exit code 1).
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Io { .. } | Error::Format { .. } | Error::Invalid(_) => true,
            Error::Cell { source, .. } => source.is_input_error(),
            Error::Core(e) => core_is_input(e),
        }
    }
}

fn core_is_input(e: &wakecough_core::Error) -> bool {
    use wakecough_core::Error as C;
    match e {
        C::NonFinite(_) | C::NotPositiveDefinite | C::NoConvergence(_) => false,
        C::Fold { source, .. } => core_is_input(source),
        _ => true,
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Invalid(msg.into())
}
