//! Artifact writing: CSV series, JSON summaries, and a checksum
//! manifest. Numeric output is fixed at 12 significant digits so
//! re-runs are byte-identical and diffable.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Format a value with 12 significant digits.
pub fn fmt12(v: f64) -> String {
    format!("{v:.11e}")
}

/// Collects the files of one run directory and emits the manifest.
pub struct RunWriter {
    dir: PathBuf,
    files: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, Serialize)]
struct ManifestEntry {
    name: String,
    bytes: u64,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    created_unix: u64,
    files: &'a [ManifestEntry],
}

impl RunWriter {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(RunWriter {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn record(&mut self, name: &str, content: &[u8]) -> Result<()> {
        fs::write(self.dir.join(name), content)?;
        let mut h = Sha256::new();
        h.update(content);
        self.files.push(ManifestEntry {
            name: name.to_string(),
            bytes: content.len() as u64,
            sha256: format!("{:x}", h.finalize()),
        });
        Ok(())
    }

    /// Write a CSV with the given header and rows of 12-significant-
    /// digit values; every row is newline-terminated.
    pub fn write_csv(&mut self, name: &str, header: &str, rows: &[Vec<f64>]) -> Result<()> {
        let mut out = String::with_capacity(32 * rows.len());
        out.push_str(header);
        out.push('\n');
        for row in rows {
            let cells: Vec<String> = row.iter().map(|&v| fmt12(v)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        self.record(name, out.as_bytes())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| Error::Config(format!("serializing {name}: {e}")))?;
        text.push('\n');
        self.record(name, text.as_bytes())
    }

    /// Emit `manifest.json` listing every file written so far. The
    /// manifest itself is the only artifact carrying a timestamp.
    pub fn finish(self) -> Result<()> {
        let created_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let manifest = Manifest {
            created_unix,
            files: &self.files,
        };
        let mut text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::Config(format!("serializing manifest: {e}")))?;
        text.push('\n');
        fs::write(self.dir.join("manifest.json"), text)?;
        Ok(())
    }
}
