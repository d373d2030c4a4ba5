use std::fmt;
use std::path::Path;

use dcp::DcpError;

/// A failed command and its process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Exit 1: a required input could not be read.
    Missing(String),
    /// Exit 2: invalid flags or values.
    Usage(String),
    /// Exit 3: a non-finite value appeared.
    Numeric(String),
    /// Exit 4: a checkpoint of another format version.
    Version(String),
    /// Exit 1: anything else, such as a malformed input file.
    Failed(String),
}

impl CliError {
    pub fn missing(path: &Path, err: std::io::Error) -> Self {
        CliError::Missing(format!("cannot read {}: {err}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Missing(_) | CliError::Failed(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Version(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Missing(m) | CliError::Usage(m) | CliError::Failed(m) => f.write_str(m),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
            CliError::Version(m) => write!(f, "version mismatch: {m}"),
        }
    }
}

impl From<DcpError> for CliError {
    fn from(e: DcpError) -> Self {
        let msg = e.to_string();
        match e {
            DcpError::Diverged { .. } | DcpError::NonFinite(_) => CliError::Numeric(msg),
            DcpError::Version { .. } => CliError::Version(msg),
            DcpError::InvalidInput(_) | DcpError::LabelOutOfRange { .. } => CliError::Usage(msg),
            DcpError::Io(io) if io.kind() == std::io::ErrorKind::NotFound => CliError::Missing(msg),
            _ => CliError::Failed(msg),
        }
    }
}

pub fn write_output(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Failed(format!("cannot write {}: {e}", path.display())))
}
