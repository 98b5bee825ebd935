use std::process::ExitCode;

use thiserror::Error;

/// Exit code 1 for bad input, 2 for failures while running.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
    #[error("checksum mismatch for {file}: expected {expected}, got {actual}")]
    ChecksumMismatch {
        file: String,
        expected: String,
        actual: String,
    },
    #[error("network failure fetching {url}: {detail}")]
    NetworkFailure { url: String, detail: String },
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.code())
    }

    pub fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            _ => 2,
        }
    }

    pub fn runtime(e: impl std::fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<lsoftmax::Error> for CliError {
    fn from(e: lsoftmax::Error) -> Self {
        use lsoftmax::Error as E;
        match e {
            E::InvalidMargin(_)
            | E::ShapeMismatch { .. }
            | E::LabelOutOfRange { .. }
            | E::InvalidFractions(_)
            | E::EmptySplit { .. }
            | E::InvalidNetwork(_)
            | E::InvalidConfig(_)
            | E::BadMagic { .. }
            | E::TruncatedPayload { .. }
            | E::DimensionMismatch { .. }
            | E::BadParamsFile(_) => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}
