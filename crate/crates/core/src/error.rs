use thiserror::Error;

/// Errors raised anywhere in the pipeline.
///
/// The variants are grouped by how a caller is expected to react; the CLI maps
/// them onto process exit codes through [`GuideError::exit_code`].
#[derive(Debug, Error)]
pub enum GuideError {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("solver error: {0}")]
    Solver(String),
    #[error("internal consistency error: {0}")]
    Consistency(String),
    #[error("request error: {0}")]
    Request(String),
    #[error("load error: {0}")]
    Load(String),
    #[error("unsupported state format version {found} (this build reads up to {supported})")]
    Version { found: u32, supported: u32 },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl GuideError {
    /// 1 for rejected unlearning requests, 3 for numerical failures, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            GuideError::Request(_) => 1,
            GuideError::Numerical(_) | GuideError::Solver(_) | GuideError::Consistency(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, GuideError>;
