// SPDX-License-Identifier: Apache-2.0

//! Output directory writer and run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub struct Artifacts {
    dir: PathBuf,
    written: Vec<String>,
    started: Instant,
    timings: BTreeMap<String, f64>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config_sha256: String,
    seed: u64,
    wall_clock_s: f64,
    timings_s: &'a BTreeMap<String, f64>,
    artifacts: &'a [String],
}

impl Artifacts {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
            started: Instant::now(),
            timings: BTreeMap::new(),
        })
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, body).with_context(|| format!("cannot write {}", path.display()))?;
        self.written.push(name.to_owned());
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut body = serde_json::to_string_pretty(value)?;
        body.push('\n');
        self.text(name, &body)
    }

    pub fn jsonl<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let mut body = String::new();
        for r in rows {
            body.push_str(&serde_json::to_string(r)?);
            body.push('\n');
        }
        self.text(name, &body)
    }

    pub fn time(&mut self, label: &str, seconds: f64) {
        self.timings.insert(label.to_owned(), seconds);
    }

    /// Writes `manifest.json`, the only artifact carrying wall-clock times.
    pub fn finish(mut self, command: &str, config_toml: &str, seed: u64) -> Result<()> {
        let timings = std::mem::take(&mut self.timings);
        let written = self.written.clone();
        let manifest = Manifest {
            tool: "xbarlife",
            version: env!("CARGO_PKG_VERSION"),
            command,
            config_sha256: hex::encode(Sha256::digest(config_toml.as_bytes())),
            seed,
            wall_clock_s: self.started.elapsed().as_secs_f64(),
            timings_s: &timings,
            artifacts: &written,
        };
        self.json("manifest.json", &manifest)
    }
}
