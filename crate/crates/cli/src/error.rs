use std::fmt;
use std::path::Path;

/// A failure with the process exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or flag combinations (exit 2).
    Usage(String),
    /// Missing, unreadable or inconsistent files (exit 3).
    Data(String),
    /// Non-finite values or a failed solve (exit 4).
    Numerical(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<upcmr::Error> for CliError {
    fn from(e: upcmr::Error) -> Self {
        use upcmr::Error as E;
        let msg = e.to_string();
        match e {
            E::InvalidArgument(_) => CliError::Usage(msg),
            E::NonFinite(_) | E::Numerical(_) | E::Tensor(_) => CliError::Numerical(msg),
            E::Shape(_) | E::Record { .. } | E::Io { .. } | E::Parse { .. } => CliError::Data(msg),
        }
    }
}
