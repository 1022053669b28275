//! Output directory bookkeeping and the per-run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact: String,
    pub version: String,
    pub subcommand: String,
    /// SHA-256 of the canonical effective config.
    pub config_hash: String,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<OutputRecord>,
    pub warnings: Vec<String>,
}

impl RunManifest {
    pub fn checksum(&self, file: &str) -> Option<&str> {
        self.outputs.iter().find(|o| o.file == file).map(|o| o.sha256.as_str())
    }
}

/// A run directory that checksums every file written through it.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    records: Vec<OutputRecord>,
    started: Instant,
}

impl OutputDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self, CliError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| CliError::Io(format!("cannot create {}: {e}", root.display())))?;
        Ok(Self { root, records: Vec::new(), started: Instant::now() })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let target = self.root.join(name);
        fs::write(&target, bytes).map_err(|e| CliError::Io(format!("cannot write {}: {e}", target.display())))?;
        self.records.retain(|r| r.file != name);
        self.records.push(OutputRecord { file: name.into(), bytes: bytes.len() as u64, sha256: hex::encode(Sha256::digest(bytes)) });
        Ok(())
    }

    pub fn write_json<S: Serialize>(&mut self, name: &str, value: &S) -> Result<(), CliError> {
        let mut text = serde_json::to_vec_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        text.push(b'\n');
        self.write(name, &text)
    }

    /// Writes `manifest.json` last; it is the only file not listed in itself.
    pub fn finish(self, subcommand: &str, config_hash: String, warnings: Vec<String>) -> Result<RunManifest, CliError> {
        let manifest = RunManifest {
            artifact: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            subcommand: subcommand.into(),
            config_hash,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            outputs: self.records,
            warnings,
        };
        let text = serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
        let target = self.root.join(MANIFEST_FILE);
        fs::write(&target, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", target.display())))?;
        Ok(manifest)
    }
}

/// In-memory CSV with a single header row.
pub struct Table {
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header).expect("writing to memory");
        Self { writer }
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).expect("writing to memory");
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.writer.into_inner().expect("flushing to memory")
    }
}
