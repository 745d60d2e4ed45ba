//! Library side of the `labelgan` binary: config files and subcommands.

pub mod commands;
pub mod config;

use std::fmt;

/// An invalid configuration or input. Maps to exit code 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub problems: Vec<String>,
}

impl ConfigError {
    pub fn new(msg: impl Into<String>) -> Self {
        Self {
            problems: vec![msg.into()],
        }
    }

    pub fn list(problems: Vec<String>) -> Self {
        Self { problems }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let [one] = self.problems.as_slice() {
            return write!(f, "{one}");
        }
        write!(f, "{} configuration problems:", self.problems.len())?;
        for p in &self.problems {
            write!(f, "\n  - {p}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

impl From<labelgan_core::Error> for ConfigError {
    fn from(e: labelgan_core::Error) -> Self {
        Self::new(e.to_string())
    }
}

pub const EXIT_SUCCESS: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// Exit code for an error: 2 for configuration problems, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    let is_config = err.chain().any(|c| {
        c.downcast_ref::<ConfigError>().is_some()
            || matches!(c.downcast_ref::<labelgan_core::Error>(), Some(labelgan_core::Error::Config(_)))
    });
    if is_config {
        EXIT_CONFIG
    } else {
        EXIT_FAILURE
    }
}
