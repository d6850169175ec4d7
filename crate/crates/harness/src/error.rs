//! Harness error type with CLI exit-code mapping.

use std::fmt;

/// Errors surfaced by the harness and CLI.
#[derive(Debug)]
pub enum HarnessError {
    /// Bad configuration, arguments, or input files. Exit code 2.
    Config(String),
    /// A numeric run aborted (non-finite loss or parameters). Exit code 3.
    Numerical(String),
    /// Too little data to produce a report; lists the cells that are missing
    /// or failed. Exit code 4.
    UnderPowered {
        need: usize,
        have: usize,
        missing: Vec<String>,
    },
    Io(std::io::Error),
    Core(resque_core::Error),
}

impl fmt::Display for HarnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HarnessError::Config(msg) => write!(f, "config error: {msg}"),
            HarnessError::Numerical(msg) => write!(f, "numerical failure: {msg}"),
            HarnessError::UnderPowered {
                need,
                have,
                missing,
            } => {
                write!(
                    f,
                    "under-powered report: need {need} completed cells, have {have}"
                )?;
                if !missing.is_empty() {
                    write!(f, "; missing or failed: {}", missing.join(", "))?;
                }
                Ok(())
            }
            HarnessError::Io(e) => write!(f, "io error: {e}"),
            HarnessError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for HarnessError {}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e)
    }
}

impl From<resque_core::Error> for HarnessError {
    fn from(e: resque_core::Error) -> Self {
        // Numerical failures keep their own exit code, even inside a
        // tagged pipeline stage.
        fn is_numerical(e: &resque_core::Error) -> bool {
            match e {
                resque_core::Error::Numerical(_) => true,
                resque_core::Error::Stage { source, .. } => is_numerical(source),
                _ => false,
            }
        }
        if is_numerical(&e) {
            HarnessError::Numerical(e.to_string())
        } else {
            HarnessError::Core(e)
        }
    }
}

impl HarnessError {
    /// CLI exit code: 2 config, 3 numerical, 4 under-powered.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Numerical(_) => 3,
            HarnessError::UnderPowered { .. } => 4,
            HarnessError::Core(resque_core::Error::Numerical(_)) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
