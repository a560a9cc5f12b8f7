use std::process::ExitCode;

use layermix::Error;

/// A command failure, carrying its stable exit code.
#[derive(Debug)]
pub enum Failure {
    Check(String),
    Usage(String),
    Io(String),
    EmptyBank(String),
    IncompleteGrid(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Check(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Io(_) => 3,
            Failure::EmptyBank(_) => 4,
            Failure::IncompleteGrid(_) => 5,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Check(m)
            | Failure::Usage(m)
            | Failure::Io(m)
            | Failure::EmptyBank(m)
            | Failure::IncompleteGrid(m) => m,
        }
    }

    pub fn report(&self) -> ExitCode {
        eprintln!("error: {}", self.message());
        ExitCode::from(self.code())
    }

    pub fn io(context: impl std::fmt::Display, e: impl std::fmt::Display) -> Self {
        Failure::Io(format!("{context}: {e}"))
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Io { .. } | Error::Decode { .. } | Error::InvalidImage(_) => Failure::Io(msg),
            Error::EmptyBank { .. } => Failure::EmptyBank(msg),
            Error::IncompleteGrid(_) => Failure::IncompleteGrid(msg),
            Error::Parameter(_)
            | Error::ShapeMismatch { .. }
            | Error::Log { .. }
            | Error::Record(_)
            | Error::Sequence(_)
            | Error::Distribution(_) => Failure::Usage(msg),
        }
    }
}
