//! Run directories and manifests.
//!
//! Outputs are written into a hidden staging directory that is renamed to
//! its final name only after the command succeeds, so a failed run leaves
//! nothing behind.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use chrono::{DateTime, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

use opss_core::io::write_json_atomic;

use crate::config::RunConfig;

pub const OUTPUT_ROOT_ENV: &str = "OPSS_OUTPUT_ROOT";

#[derive(Debug, Clone, Serialize)]
pub struct StageTiming {
    pub name: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config_hash: String,
    pub started_at: String,
    pub wall_seconds: f64,
    pub workers: usize,
    pub stages: Vec<StageTiming>,
    pub files: Vec<FileEntry>,
    pub convergence: BTreeMap<String, bool>,
    pub notes: Vec<String>,
    pub config: RunConfig,
}

pub struct Run {
    command: String,
    config: RunConfig,
    hash: String,
    started_at: DateTime<Utc>,
    clock: Instant,
    root: PathBuf,
    staging: PathBuf,
    stages: Vec<StageTiming>,
    pub convergence: BTreeMap<String, bool>,
    pub notes: Vec<String>,
}

/// `sha256(command, config)` in hex.
pub fn config_hash(command: &str, config: &RunConfig) -> anyhow::Result<String> {
    let mut h = Sha256::new();
    h.update(command.as_bytes());
    h.update([0]);
    h.update(serde_json::to_vec(config)?);
    Ok(hex::encode(h.finalize()))
}

pub fn output_root(flag: Option<&Path>, config: &RunConfig) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| config.output_dir.clone())
        .or_else(|| std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

impl Run {
    pub fn start(command: &str, config: RunConfig, root: PathBuf) -> anyhow::Result<Self> {
        let hash = config_hash(command, &config)?;
        let started_at = Utc::now();
        fs::create_dir_all(&root)
            .with_context(|| format!("cannot create output root {}", root.display()))?;
        let staging = root.join(format!(
            ".{}-{}-{}.partial",
            command,
            &hash[..12],
            std::process::id()
        ));
        if staging.exists() {
            fs::remove_dir_all(&staging)?;
        }
        fs::create_dir(&staging)
            .with_context(|| format!("cannot create {}", staging.display()))?;
        Ok(Self {
            command: command.to_string(),
            config,
            hash,
            started_at,
            clock: Instant::now(),
            root,
            staging,
            stages: Vec::new(),
            convergence: BTreeMap::new(),
            notes: Vec::new(),
        })
    }

    /// Path of an output file inside the run directory.
    pub fn file(&self, name: &str) -> PathBuf {
        self.staging.join(name)
    }

    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.stages.push(StageTiming {
            name: name.to_string(),
            seconds: t.elapsed().as_secs_f64(),
        });
        out
    }

    pub fn abandon(self) {
        let _ = fs::remove_dir_all(&self.staging);
    }

    /// Writes the manifest and moves the run directory into place.
    pub fn finish(self) -> anyhow::Result<PathBuf> {
        // the resolved config alone; feeding it back via --config repeats the run
        write_json_atomic(&self.staging.join("config.json"), &self.config)?;
        let mut files = Vec::new();
        let mut names: Vec<_> = fs::read_dir(&self.staging)?
            .map(|e| e.map(|e| e.file_name()))
            .collect::<Result<_, _>>()?;
        names.sort();
        for name in names {
            let bytes = fs::read(self.staging.join(&name))?;
            files.push(FileEntry {
                name: name.to_string_lossy().into_owned(),
                bytes: bytes.len() as u64,
                sha256: hex::encode(Sha256::digest(&bytes)),
            });
        }
        let manifest = RunManifest {
            command: self.command.clone(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: self.hash.clone(),
            started_at: self.started_at.to_rfc3339(),
            wall_seconds: self.clock.elapsed().as_secs_f64(),
            workers: rayon::current_num_threads(),
            stages: self.stages,
            files,
            convergence: self.convergence,
            notes: self.notes,
            config: self.config,
        };
        write_json_atomic(&self.staging.join("manifest.json"), &manifest)?;

        let base = format!(
            "{}-{}-{}",
            self.started_at.format("%Y%m%dT%H%M%SZ"),
            self.command,
            &self.hash[..12]
        );
        let mut target = self.root.join(&base);
        let mut k = 1;
        while target.exists() {
            target = self.root.join(format!("{base}-{k}"));
            k += 1;
        }
        fs::rename(&self.staging, &target)
            .with_context(|| format!("cannot move run into {}", target.display()))?;
        Ok(target)
    }
}
