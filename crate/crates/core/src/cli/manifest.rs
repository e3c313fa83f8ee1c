//! Run manifests: the effective configuration, input checksums, ingest
//! diagnostics and per-phase wall-clock timings of one command.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::corpus::{DiagnosticKind, Diagnostics};

#[derive(Debug, Clone, Serialize)]
pub struct InputChecksum {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticSummary {
    pub warning_count: usize,
    pub by_kind: BTreeMap<DiagnosticKind, usize>,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: serde_json::Value,
    pub inputs: Vec<InputChecksum>,
    pub outputs: Vec<String>,
    pub diagnostics: DiagnosticSummary,
    pub timings_ms: BTreeMap<String, f64>,
    pub notes: Vec<String>,
    #[serde(skip)]
    phase_started: Option<(String, Instant)>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            tool: "unirank",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config: serde_json::Value::Null,
            inputs: Vec::new(),
            outputs: Vec::new(),
            diagnostics: DiagnosticSummary { warning_count: 0, by_kind: BTreeMap::new() },
            timings_ms: BTreeMap::new(),
            notes: Vec::new(),
            phase_started: None,
        }
    }

    pub fn set_config<T: Serialize>(&mut self, config: &T) {
        self.config = serde_json::to_value(config).expect("configuration serializes");
    }

    pub fn add_input(&mut self, path: &Path) -> std::io::Result<()> {
        let sha256 = if path.is_dir() { checksum_dir(path)? } else { checksum_file(path)? };
        self.inputs.push(InputChecksum { path: path.display().to_string(), sha256 });
        Ok(())
    }

    pub fn add_output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn record_diagnostics(&mut self, diagnostics: &Diagnostics) {
        self.diagnostics.warning_count += diagnostics.len();
        for (kind, n) in diagnostics.summary() {
            *self.diagnostics.by_kind.entry(kind).or_insert(0) += n;
        }
    }

    /// Starts timing a phase, closing the previous one.
    pub fn phase(&mut self, name: &str) {
        self.finish_phase();
        self.phase_started = Some((name.to_string(), Instant::now()));
    }

    pub fn finish_phase(&mut self) {
        if let Some((name, started)) = self.phase_started.take() {
            *self.timings_ms.entry(name).or_insert(0.0) += started.elapsed().as_secs_f64() * 1e3;
        }
    }

    pub fn write(&mut self, path: &Path) -> std::io::Result<()> {
        self.finish_phase();
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        fs::write(path, text)
    }
}

pub fn checksum_file(path: &Path) -> std::io::Result<String> {
    let mut file = fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Digest over the sorted file names and contents of a directory's files.
pub fn checksum_dir(dir: &Path) -> std::io::Result<String> {
    let mut paths: Vec<PathBuf> =
        fs::read_dir(dir)?.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.is_file()).collect();
    paths.sort();
    let mut hasher = Sha256::new();
    for p in paths {
        hasher.update(p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default().as_bytes());
        hasher.update([0u8]);
        hasher.update(checksum_file(&p)?.as_bytes());
        hasher.update(b"\n");
    }
    Ok(hex::encode(hasher.finalize()))
}
