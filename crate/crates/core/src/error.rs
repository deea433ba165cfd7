use thiserror::Error;

/// Errors raised by the library.
///
/// Variants are grouped so the command-line front end can map them onto
/// process exit codes (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at data row {row}, column '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("rank deficient: {0}")]
    Rank(String),

    #[error("degenerate design: {0}")]
    Degenerate(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// 2 usage, 3 data, 4 numerical degeneracy.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::Config(_) => 2,
            Error::Schema(_)
            | Error::Parse { .. }
            | Error::Rank(_)
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_) => 3,
            Error::Degenerate(_) | Error::Singular(_) => 4,
        }
    }

    /// True for errors that mean "this subset carries no information"
    /// rather than "the input is wrong".
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Degenerate(_) | Error::Singular(_))
    }
}
