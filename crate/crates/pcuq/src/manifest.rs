//! `manifest.json`: one record per command run in an output directory.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

pub const FILE_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub name: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    pub version: String,
    /// Resolved configuration, as TOML text.
    pub config: String,
    pub seed: u64,
    pub wall_clock_seconds: f64,
    pub stages: Vec<Stage>,
    pub warnings: Vec<String>,
    pub outputs: Vec<OutputFile>,
    /// Command-specific results (e.g. the selected λ).
    pub results: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub runs: BTreeMap<String, RunRecord>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        match std::fs::read_to_string(path) {
            Ok(s) => serde_json::from_str(&s).map_err(|e| CliError::format(path, e.to_string())),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(CliError::io(path, e)),
        }
    }

    /// Writes through a temporary file and a rename.
    pub fn write_atomic(&self, path: &Path) -> Result<(), CliError> {
        let tmp = path.with_extension("json.tmp");
        let text = serde_json::to_string_pretty(self).expect("manifest serialises");
        let mut f = std::fs::File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
        f.write_all(text.as_bytes()).map_err(|e| CliError::io(&tmp, e))?;
        f.sync_all().map_err(|e| CliError::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
    }
}

pub fn sha256_file(path: &Path) -> Result<(u64, String), CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok((bytes.len() as u64, hex::encode(Sha256::digest(&bytes))))
}

/// Collects timings, warnings and outputs while a command runs.
pub struct Recorder {
    command: String,
    out_dir: PathBuf,
    started: Instant,
    stage_start: Instant,
    stages: Vec<Stage>,
    pub warnings: Vec<String>,
    outputs: Vec<PathBuf>,
    pub results: BTreeMap<String, serde_json::Value>,
}

impl Recorder {
    pub fn new(command: &str, out_dir: &Path) -> Self {
        let now = Instant::now();
        Self {
            command: command.to_string(),
            out_dir: out_dir.to_path_buf(),
            started: now,
            stage_start: now,
            stages: Vec::new(),
            warnings: Vec::new(),
            outputs: Vec::new(),
            results: BTreeMap::new(),
        }
    }

    /// Closes the current stage under `name`.
    pub fn stage(&mut self, name: &str) {
        let now = Instant::now();
        self.stages.push(Stage {
            name: name.to_string(),
            seconds: (now - self.stage_start).as_secs_f64(),
        });
        self.stage_start = now;
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Merges this run into `<out>/manifest.json`.
    pub fn finish(self, cfg: &RunConfig) -> Result<(), CliError> {
        let mut outputs = Vec::with_capacity(self.outputs.len());
        for p in &self.outputs {
            let (bytes, sha256) = sha256_file(p)?;
            let file = p
                .strip_prefix(&self.out_dir)
                .unwrap_or(p)
                .display()
                .to_string();
            outputs.push(OutputFile { file, bytes, sha256 });
        }
        let record = RunRecord {
            command: self.command.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: cfg.to_toml(),
            seed: cfg.run.seed,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            stages: self.stages,
            warnings: self.warnings,
            outputs,
            results: self.results,
        };
        let path = self.out_dir.join(FILE_NAME);
        let mut m = Manifest::read(&path)?;
        m.runs.insert(self.command, record);
        m.write_atomic(&path)
    }
}
