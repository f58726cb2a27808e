//! Configuration, file formats and experiment drivers for the `moistpe`
//! command-line tool.

pub mod commands;
pub mod config;
pub mod mpe1;
pub mod output;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    BlowUp(String),
    #[error("{0}")]
    ChecksFailed(String),
    #[error("{0}")]
    Io(String),
}

impl LabError {
    /// 2 validation, 3 blow-up, 4 failed checks, 1 I/O.
    pub fn exit_code(&self) -> u8 {
        match self {
            LabError::Validation(_) => 2,
            LabError::BlowUp(_) => 3,
            LabError::ChecksFailed(_) => 4,
            LabError::Io(_) => 1,
        }
    }
}
