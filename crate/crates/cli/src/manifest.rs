//! Run manifest: what went in, what came out, and how long each stage took.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Instant;

use polindex::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub millis: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// sha256 of the canonical JSON of `config`.
    pub config_hash: String,
    /// Effective parameters after merging the config file and flags.
    pub config: serde_json::Value,
    pub seed: u64,
    pub jobs: usize,
    pub inputs: Vec<FileDigest>,
    pub timings: Vec<StageTiming>,
    pub outputs: Vec<FileDigest>,
}

pub fn digest_file(path: &Path) -> Result<FileDigest> {
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut bytes = 0u64;
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
        bytes += n as u64;
    }
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: hex::encode(h.finalize()),
        bytes,
    })
}

pub fn hash_json(v: &serde_json::Value) -> String {
    // serde_json maps are ordered, so this rendering is canonical
    hex::encode(Sha256::digest(v.to_string().as_bytes()))
}

/// Collects manifest pieces while a command runs.
#[derive(Debug)]
pub struct Recorder {
    pub command: String,
    pub seed: u64,
    pub jobs: usize,
    pub config: serde_json::Map<String, serde_json::Value>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    timings: Vec<StageTiming>,
}

impl Recorder {
    pub fn new(command: &str, seed: u64, jobs: usize) -> Self {
        Self {
            command: command.to_string(),
            seed,
            jobs,
            config: serde_json::Map::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings: Vec::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.config.insert(key.to_string(), v);
    }

    pub fn input(&mut self, p: &Path) {
        if !self.inputs.iter().any(|x| x == p) {
            self.inputs.push(p.to_path_buf());
        }
    }

    pub fn output(&mut self, p: &Path) {
        if !self.outputs.iter().any(|x| x == p) {
            self.outputs.push(p.to_path_buf());
        }
    }

    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f()?;
        self.timings.push(StageTiming {
            stage: name.to_string(),
            millis: start.elapsed().as_secs_f64() * 1e3,
        });
        Ok(out)
    }

    pub fn finish(self) -> Result<RunManifest> {
        let mut config = self.config;
        config.insert("seed".into(), self.seed.into());
        config.insert("jobs".into(), self.jobs.into());
        let config = serde_json::Value::Object(config);
        Ok(RunManifest {
            tool: "polindex".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: self.command,
            config_hash: hash_json(&config),
            config,
            seed: self.seed,
            jobs: self.jobs,
            inputs: self.inputs.iter().map(|p| digest_file(p)).collect::<Result<_>>()?,
            timings: self.timings,
            outputs: self.outputs.iter().map(|p| digest_file(p)).collect::<Result<_>>()?,
        })
    }
}

pub fn write_manifest(m: &RunManifest, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(m).map_err(|e| Error::Internal(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
