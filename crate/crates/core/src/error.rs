use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Error taxonomy shared by every module.
///
/// The split matters for the CLI exit code: configuration and parse problems
/// are usage errors (exit 2), everything else is a computation failure
/// (exit 1).
#[derive(Debug, Error)]
pub enum Error {
    /// A time or index outside the object's domain (t > horizon, level too
    /// fine for the grid, no room for a forward step, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A time that should sit on the grid does not, beyond snap tolerance.
    #[error("precision error: {0}")]
    Precision(String),

    /// Invalid parameters or incompatible options.
    #[error("config error: {0}")]
    Config(String),

    /// A functional evaluation failed (non-finite value, empty domain, ...).
    #[error("evaluation error: {0}")]
    Evaluation(String),

    /// An internal cross-check failed; indicates inconsistent inputs
    /// (e.g. a jump registry that disagrees with the subdivision) or a bug.
    #[error("internal consistency error: {0}")]
    Inconsistency(String),

    /// Malformed input file.
    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors that indicate misuse rather than a failed computation.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Parse(_))
    }
}
