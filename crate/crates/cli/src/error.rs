use std::fmt;
use std::path::{Path, PathBuf};

/// Exit status for a run that completed but broke a known bound.
pub const EXIT_VIOLATION: i32 = 2;
/// Exit status for malformed input.
pub const EXIT_INPUT: i32 = 3;
/// Exit status for numerical or IO failures.
pub const EXIT_FAILURE: i32 = 1;

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Failure(String),
    Io { path: PathBuf, message: String },
}

impl CliError {
    pub fn io(path: &Path, err: impl fmt::Display) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            message: err.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Failure(_) | CliError::Io { .. } => EXIT_FAILURE,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "invalid input: {m}"),
            CliError::Failure(m) => write!(f, "run failed: {m}"),
            CliError::Io { path, message } => write!(f, "{}: {message}", path.display()),
        }
    }
}

impl std::error::Error for CliError {}

impl From<derivbound::Error> for CliError {
    fn from(e: derivbound::Error) -> Self {
        use derivbound::Error as E;
        match e {
            E::Io { path, source } => CliError::Io {
                path: path.into(),
                message: source.to_string(),
            },
            E::InvalidGrid(_)
            | E::WrongRepresentation { .. }
            | E::ShapeMismatch(_)
            | E::InvalidExponent(_)
            | E::InvalidOversample
            | E::Nyquist(_)
            | E::InvalidMultiIndex(_)
            | E::InvalidFamily(_)
            | E::OddOrder(_)
            | E::InvalidMartingale(_)
            | E::DegenerateSignGrid(_)
            | E::Constraint(_)
            | E::TooLarge(_)
            | E::Parse { .. }
            | E::Serialization(_) => CliError::Input(e.to_string()),
            E::ZeroDenominator(_)
            | E::FrequencyCollision(_)
            | E::NonFinite(_)
            | E::Quadrature(_)
            | E::Optimization(_) => CliError::Failure(e.to_string()),
        }
    }
}
