//! Artifact writers and the run manifest.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Fixed 17-significant-digit rendering used in every CSV cell.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

/// Collects the files a command writes under the output directory.
pub struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Validation(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn csv(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        writeln!(w, "{}", header.join(","))?;
        for r in rows {
            writeln!(w, "{}", r.join(","))?;
        }
        w.flush()?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::Numerical(format!("cannot serialise {name}: {e}")))?;
        fs::write(self.dir.join(name), text + "\n")?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

pub fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Serialize)]
pub struct ParamSource {
    /// File path, or `null` for the built-in table.
    pub path: Option<String>,
    /// SHA-256 of the file bytes (of the canonical table when built in).
    pub sha256: String,
    /// Canonical `key = value` text of the parameters in effect.
    pub values: String,
}

#[derive(Debug, Serialize)]
pub struct ConfigSource {
    pub path: Option<String>,
    pub sha256: Option<String>,
    /// Parsed configuration with every default filled in.
    pub resolved: serde_json::Value,
}

/// Everything needed to repeat a run.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub toolkit: &'static str,
    pub version: &'static str,
    pub command: String,
    pub argv: Vec<String>,
    pub params: ParamSource,
    pub config: ConfigSource,
    pub workers: usize,
    pub seed: u64,
    pub outputs: Vec<String>,
    pub wall_time_s: f64,
    /// `ok`, or the error that ended the run.
    pub status: String,
}
