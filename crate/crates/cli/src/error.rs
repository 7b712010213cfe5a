//! CLI error categories mapped onto distinct process exit codes.

use std::fmt;

use rfnoise_core::Error as CoreError;

pub type CliResult<T> = Result<T, CliError>;

/// Exit codes: 0 success, 2 configuration, 3 I/O, 4 training divergence,
/// 5 metrology.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Divergence(String),
    Metrology(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(msg: impl Into<String>) -> Self {
        CliError::Io(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Divergence(_) => 4,
            CliError::Metrology(_) => 5,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Divergence(m) => write!(f, "training diverged: {m}"),
            CliError::Metrology(m) => write!(f, "metrology error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match &e {
            CoreError::Io { .. } | CoreError::Parse { .. } => CliError::Io(e.to_string()),
            CoreError::Divergence { .. } => CliError::Divergence(e.to_string()),
            CoreError::Aliasing { .. }
            | CoreError::SpectralBounds { .. }
            | CoreError::DegenerateTone { .. }
            | CoreError::FftLength { .. }
            | CoreError::AllZeroSpectrum
            | CoreError::IncoherentTone { .. }
            | CoreError::UnreliableIm3 { .. }
            | CoreError::UndefinedCorrelation => CliError::Metrology(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}
