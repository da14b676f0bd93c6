//! Output directory handling and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use darkmode_core::{Error, Result};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::preset::Resolved;

pub const MANIFEST_NAME: &str = "manifest.json";

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FileRecord {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FailureRecord {
    pub run: String,
    pub error: String,
}

/// Files written by one invocation, each replaced atomically.
#[derive(Debug)]
pub struct Artifacts {
    dir: PathBuf,
    pub files: Vec<FileRecord>,
    pub failures: Vec<FailureRecord>,
    pub notes: Vec<String>,
}

impl Artifacts {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            failures: Vec::new(),
            notes: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Write `bytes` to `name` via a temporary file and rename.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let target = self.dir.join(name);
        let tmp = self.dir.join(format!(".{name}.tmp"));
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, &target)?;
        self.files.retain(|f| f.name != name);
        self.files.push(FileRecord {
            name: name.to_string(),
            sha256: hex_digest(bytes),
            bytes: bytes.len(),
        });
        Ok(())
    }

    /// Render a table into memory and write it.
    pub fn csv(&mut self, name: &str, render: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        render(&mut buf)?;
        self.write(name, &buf)
    }

    pub fn fail(&mut self, run: impl Into<String>, err: &Error) {
        let run = run.into();
        log::warn!("{run} failed: {err}");
        self.failures.push(FailureRecord {
            run,
            error: err.to_string(),
        });
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    /// Write the manifest and return it.
    pub fn finish(mut self, command: &str, resolved: Option<&Resolved>, wall: Duration) -> Result<Manifest> {
        let files: Vec<Value> = self
            .files
            .iter()
            .map(|f| json!({"name": f.name, "sha256": f.sha256, "bytes": f.bytes}))
            .collect();
        let failures: Vec<Value> = self
            .failures
            .iter()
            .map(|f| json!({"run": f.run, "error": f.error}))
            .collect();
        let mut doc = json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "files": files,
            "failures": failures,
            "notes": self.notes,
            "partial": !self.failures.is_empty(),
            "wall_time_s": wall.as_secs_f64(),
            "timestamp_unix": SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        });
        if let Some(r) = resolved {
            doc["scenario"] = json!(r.scenario.name());
            doc["scale"] = json!(r.scale.name());
            doc["seed"] = json!(r.master_seed);
            doc["inputs_sha256"] = json!(hex_digest(r.canonical.as_bytes()));
            doc["inputs"] = json!(r.canonical.lines().collect::<Vec<_>>());
            doc["warnings"] = json!(r.params.warnings);
        }
        let text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Format(e.to_string()))? + "\n";
        self.write(MANIFEST_NAME, text.as_bytes())?;
        Ok(Manifest {
            dir: self.dir,
            files: self.files,
            failures: self.failures,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Manifest {
    pub dir: PathBuf,
    pub files: Vec<FileRecord>,
    pub failures: Vec<FailureRecord>,
}

impl Manifest {
    pub fn is_partial(&self) -> bool {
        !self.failures.is_empty()
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }
}
