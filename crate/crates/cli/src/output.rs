//! Output directory handling: CSV and JSON writers that checksum every file
//! they emit, and the run manifest that lists those checksums.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

/// Bumped whenever a CSV layout changes.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

pub struct OutDir {
    root: PathBuf,
    files: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Formats an optional number, leaving the cell empty when absent.
pub fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

impl OutDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(OutDir { root: root.to_path_buf(), files: Vec::new() })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn files(&self) -> &[FileEntry] {
        &self.files
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.files.push(FileEntry { path: name.to_string(), sha256: sha256_hex(bytes), bytes: bytes.len() });
        Ok(())
    }

    pub fn write_csv<I, R>(&mut self, name: &str, header: &[String], rows: I) -> CliResult<()>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator,
        R::Item: AsRef<[u8]>,
    {
        let csv_err = |e: csv::Error| CliError::Run(format!("{name}: {e}"));
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(csv_err)?;
        for row in rows {
            w.write_record(row).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Run(format!("{name}: {e}")))?;
        self.write(name, &bytes)
    }

    pub fn write_jsonl<T: Serialize>(&mut self, name: &str, items: impl IntoIterator<Item = T>) -> CliResult<()> {
        let mut bytes = Vec::new();
        for item in items {
            serde_json::to_writer(&mut bytes, &item).map_err(|e| CliError::Run(e.to_string()))?;
            bytes.push(b'\n');
        }
        self.write(name, &bytes)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Run(e.to_string()))?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    /// Writes `manifest.json`, which lists every file written so far.
    pub fn finish(self, mut manifest: Manifest) -> CliResult<Manifest> {
        manifest.files = self.files.clone();
        let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::Run(e.to_string()))?;
        bytes.push(b'\n');
        let path = self.root.join("manifest.json");
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        Ok(manifest)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub wall_clock_s: f64,
    /// Wall time of each run, in job order.
    pub per_run_s: Vec<f64>,
    pub runs_per_minute: f64,
    pub workers: usize,
}

impl Timing {
    pub fn new(started: Instant, per_run_s: Vec<f64>, workers: usize) -> Self {
        let wall = started.elapsed().as_secs_f64();
        let rate = if wall > 0.0 { per_run_s.len() as f64 * 60.0 / wall } else { 0.0 };
        Timing { wall_clock_s: wall, per_run_s, runs_per_minute: rate, workers }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub schema_version: u32,
    pub command: String,
    pub config: ExperimentConfig,
    pub config_sha256: String,
    pub master_seed: u64,
    pub run_seeds: Vec<u64>,
    /// Command-specific settings such as grids and budgets.
    pub settings: serde_json::Value,
    pub timing: Timing,
    pub failures: Vec<String>,
    pub files: Vec<FileEntry>,
}

impl Manifest {
    pub fn new(command: &str, config: &ExperimentConfig, run_seeds: Vec<u64>, settings: serde_json::Value, timing: Timing) -> Self {
        let config_json = serde_json::to_vec(config).unwrap_or_default();
        Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            config: config.clone(),
            config_sha256: sha256_hex(&config_json),
            master_seed: config.params.seed,
            run_seeds,
            settings,
            timing,
            failures: Vec::new(),
            files: Vec::new(),
        }
    }
}
