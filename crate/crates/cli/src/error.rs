use std::fmt;
use std::path::PathBuf;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    MissingArtifact { path: PathBuf, produced_by: &'static str },
    Core(cuthmm::Error),
    Io(std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::MissingArtifact { .. } => 3,
            CliError::Core(e) if e.is_numerical() => 4,
            CliError::Core(_) | CliError::Io(_) => 1,
        }
    }

    pub fn missing(path: PathBuf, produced_by: &'static str) -> Self {
        CliError::MissingArtifact { path, produced_by }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::MissingArtifact { path, produced_by } => {
                write!(f, "missing artifact {} (run `cuthmm {produced_by}` with the same config first)", path.display())
            }
            CliError::Core(e) if e.is_numerical() => write!(f, "numerical failure: {e}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "I/O error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<cuthmm::Error> for CliError {
    fn from(e: cuthmm::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}
