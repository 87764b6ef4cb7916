//! Error kinds that select the process exit code.

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

pub const USAGE: u8 = 2;
pub const MISSING_INPUT: u8 = 3;
pub const RUNTIME: u8 = 4;

/// Invalid arguments or configuration values.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

/// A required input file or directory does not exist.
#[derive(Debug)]
pub struct MissingInput(pub PathBuf);

impl fmt::Display for MissingInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "missing input: {}", self.0.display())
    }
}

impl std::error::Error for MissingInput {}

pub fn code_for(err: &anyhow::Error) -> ExitCode {
    let code = if err.downcast_ref::<MissingInput>().is_some() {
        MISSING_INPUT
    } else if err.downcast_ref::<Usage>().is_some() {
        USAGE
    } else if let Some(e) = err.downcast_ref::<depthfuse::Error>() {
        match e {
            depthfuse::Error::InvalidArgument(_) | depthfuse::Error::Config(_) => USAGE,
            _ => RUNTIME,
        }
    } else {
        RUNTIME
    };
    ExitCode::from(code)
}

/// Fails with [`MissingInput`] unless `path` exists.
pub fn require(path: &std::path::Path) -> anyhow::Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(MissingInput(path.to_path_buf()).into())
    }
}
