use std::error::Error as StdError;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, configuration or target selection.
    #[error("{0}")]
    Usage(String),
    /// Missing, malformed or inconsistent input data.
    #[error("{context}: {source}")]
    Data { context: String, source: Box<dyn StdError + Send + Sync> },
    /// Failure writing artifacts or an unexpected internal condition.
    #[error("{context}: {source}")]
    Internal { context: String, source: Box<dyn StdError + Send + Sync> },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data { .. } => EXIT_DATA,
            CliError::Internal { .. } => EXIT_INTERNAL,
        }
    }
}

/// Wraps an input error with the file it came from.
pub fn data<E: Into<Box<dyn StdError + Send + Sync>>>(path: &Path) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Data { context: path.display().to_string(), source: e.into() }
}

/// Wraps an error raised while processing already-loaded inputs.
pub fn data_in<E: Into<Box<dyn StdError + Send + Sync>>>(context: &str) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Data { context: context.to_string(), source: e.into() }
}

pub fn internal<E: Into<Box<dyn StdError + Send + Sync>>>(path: &Path) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Internal { context: format!("writing {}", path.display()), source: e.into() }
}

/// Files written by the running command, deleted again if it fails.
#[derive(Debug, Default)]
pub struct Artifacts {
    written: Vec<PathBuf>,
    created_dirs: Vec<PathBuf>,
}

impl Artifacts {
    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<(), CliError> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            self.create_dir(parent)?;
        }
        self.written.push(path.to_path_buf());
        std::fs::write(path, bytes).map_err(internal(path))
    }

    pub fn create_dir(&mut self, dir: &Path) -> Result<(), CliError> {
        let mut missing = Vec::new();
        let mut cur = Some(dir);
        while let Some(d) = cur.filter(|d| !d.as_os_str().is_empty() && !d.exists()) {
            missing.push(d.to_path_buf());
            cur = d.parent();
        }
        std::fs::create_dir_all(dir).map_err(internal(dir))?;
        missing.reverse();
        self.created_dirs.extend(missing);
        Ok(())
    }

    /// Removes everything this command created, newest first.
    pub fn rollback(self) {
        for path in self.written.iter().rev() {
            let _ = std::fs::remove_file(path);
        }
        for dir in self.created_dirs.iter().rev() {
            let _ = std::fs::remove_dir(dir);
        }
    }
}
