//! Run manifest: enough to replay a training run byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use hypertree::TrainConfig;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::Failure;

#[derive(Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: TrainConfig,
    pub inputs: Vec<InputDigest>,
    pub outputs: BTreeMap<String, String>,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    pub status: String,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

impl Manifest {
    pub fn start(command: &str, cfg: &TrainConfig) -> Self {
        Self {
            command: command.to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            seed: cfg.seed,
            config: cfg.clone(),
            inputs: Vec::new(),
            outputs: BTreeMap::new(),
            started_unix: now(),
            finished_unix: None,
            status: "running".into(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<(), Failure> {
        let bytes = fs::read(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        Ok(())
    }

    pub fn add_output(&mut self, role: &str, path: &Path) {
        self.outputs.insert(role.to_owned(), path.display().to_string());
    }

    pub fn finish(&mut self, status: &str) {
        self.finished_unix = Some(now());
        self.status = status.to_owned();
    }

    /// Writes to a temporary sibling, then renames over `path`.
    pub fn write(&self, path: &Path) -> Result<(), Failure> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Failure::input(e.to_string()))?;
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let fail = |e: std::io::Error| Failure::input(format!("{}: {e}", path.display()));
        fs::write(&tmp, format!("{json}\n")).map_err(fail)?;
        fs::rename(&tmp, path).map_err(fail)
    }
}
