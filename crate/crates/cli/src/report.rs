//! Run reports: what was computed, what was checked, what was written.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
}

#[derive(Debug, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub command: String,
    pub seed: u64,
    pub wall_time_ms: u128,
    pub checks: Vec<Check>,
    pub files: Vec<FileEntry>,
}

/// Collects output files; every write is hashed so reruns can be compared
/// byte for byte.
pub struct OutputSink {
    dir: PathBuf,
    pub files: Vec<FileEntry>,
}

impl OutputSink {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Config(format!("cannot create output dir: {e}")))?;
        Ok(OutputSink {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, contents)
            .map_err(|e| CliError::Config(format!("cannot write {name}: {e}")))?;
        let digest = Sha256::digest(contents.as_bytes());
        self.files.push(FileEntry {
            path: name.to_string(),
            sha256: hex::encode(digest),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::Config(format!("cannot serialize {name}: {e}")))?;
        self.write(name, &text)
    }

    /// The report itself is written last and is not part of its own file
    /// list (its wall time differs between reruns by design).
    pub fn finish(self, report: &RunReport) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(report)
            .map_err(|e| CliError::Config(format!("cannot serialize report: {e}")))?;
        fs::write(self.dir.join("report.json"), text)
            .map_err(|e| CliError::Config(format!("cannot write report.json: {e}")))?;
        Ok(())
    }
}

pub fn check(name: &str, passed: bool, value: f64) -> Check {
    Check {
        name: name.to_string(),
        passed,
        value,
    }
}
