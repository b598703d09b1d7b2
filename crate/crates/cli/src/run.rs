//! Run directories: config snapshot, result files and a manifest.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

#[derive(Debug, Serialize)]
struct FileEntry {
    name: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    config_sha256: &'a str,
    checks: &'a [String],
    files: Vec<FileEntry>,
}

pub struct RunDir {
    pub path: PathBuf,
    command: String,
    seed: u64,
    config_hash: String,
    files: Vec<FileEntry>,
    checks: Vec<String>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn sha256(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

impl RunDir {
    /// `<out>/<command>-<first 12 hex digits of the snapshot hash>`; the name depends only
    /// on the resolved config, so reruns overwrite the same directory.
    pub fn create(out: &Path, command: &str, cfg: &ExperimentConfig, seed: u64) -> anyhow::Result<Self> {
        let snapshot = serde_json::to_string_pretty(cfg)? + "\n";
        let config_hash = sha256(snapshot.as_bytes());
        let path = out.join(format!("{command}-{}", &config_hash[..12]));
        fs::create_dir_all(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut run = RunDir {
            path,
            command: command.to_string(),
            seed,
            config_hash,
            files: Vec::new(),
            checks: Vec::new(),
        };
        run.write("config.json", snapshot.as_bytes())?;
        Ok(run)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> anyhow::Result<()> {
        let p = self.path.join(name);
        fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))?;
        self.files.push(FileEntry { name: name.to_string(), sha256: sha256(bytes) });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<()> {
        let s = serde_json::to_string_pretty(value)? + "\n";
        self.write(name, s.as_bytes())
    }

    pub fn check(&mut self, name: impl Into<String>) {
        self.checks.push(name.into());
    }

    pub fn finish(mut self) -> anyhow::Result<PathBuf> {
        self.files.sort_by(|a, b| a.name.cmp(&b.name));
        let m = Manifest {
            tool: "mixlab",
            version: env!("CARGO_PKG_VERSION"),
            command: &self.command,
            seed: self.seed,
            config_sha256: &self.config_hash,
            checks: &self.checks,
            files: self.files,
        };
        let s = serde_json::to_string_pretty(&m)? + "\n";
        fs::write(self.path.join("manifest.json"), s)?;
        Ok(self.path)
    }
}
