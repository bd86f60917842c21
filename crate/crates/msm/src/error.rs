use std::fmt::Display;
use std::path::Path;

use thiserror::Error;

/// A command failure, classified by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input files, flags or configuration. Exit code 2.
    #[error("{0}")]
    Input(String),
    /// Sampler or other failure after inputs were accepted. Exit code 3.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    pub fn input(msg: impl Display) -> Self {
        CliError::Input(msg.to_string())
    }

    pub fn runtime(msg: impl Display) -> Self {
        CliError::Runtime(msg.to_string())
    }

    pub(crate) fn file(path: &Path, err: impl Display) -> Self {
        CliError::Input(format!("{}: {err}", path.display()))
    }
}

impl From<msm_core::Error> for CliError {
    fn from(e: msm_core::Error) -> Self {
        use msm_core::error::SamplerError;
        use msm_core::Error as E;
        match e {
            E::Sampler(SamplerError::Config(_)) => CliError::Input(e.to_string()),
            E::Sampler(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
