use std::fmt;
use std::process::ExitCode;

/// A failure with the exit status it maps to.
#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    /// The model, graph or coefficient input is malformed or invalid.
    Validation,
    /// Flags are inconsistent with each other or with the input.
    Usage,
    /// Simulation or numerical failure, or an output could not be written.
    Runtime,
}

impl Kind {
    pub fn code(self) -> u8 {
        match self {
            Kind::Validation => 1,
            Kind::Usage => 2,
            Kind::Runtime => 3,
        }
    }
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        CliError { kind: Kind::Validation, message: message.into() }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        CliError { kind: Kind::Usage, message: message.into() }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        CliError { kind: Kind::Runtime, message: message.into() }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.kind.code())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

pub type CliResult<T> = Result<T, CliError>;
