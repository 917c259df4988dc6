use std::fmt;

use cpcfg::Error;

/// Exit status for usage and input problems.
pub const EXIT_INPUT: u8 = 2;
/// Exit status for internal failures.
pub const EXIT_INTERNAL: u8 = 1;

/// A command failure with its exit status.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn input(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_INTERNAL,
            message: message.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let input = matches!(
            e,
            Error::Io { .. }
                | Error::Parse { .. }
                | Error::Config(_)
                | Error::ModelKind(_)
                | Error::Checkpoint(_)
                | Error::SentenceTooShort(_)
                | Error::TokenOutOfRange { .. }
                | Error::EnumerationTooLarge { .. }
        );
        Failure {
            code: if input { EXIT_INPUT } else { EXIT_INTERNAL },
            message: e.to_string(),
        }
    }
}

pub type CmdResult<T = ()> = Result<T, Failure>;
