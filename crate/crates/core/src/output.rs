//! Run directories, manifests and file formats.
//!
//! Every command writes into `<root>/<hash>/` where `<hash>` is the first
//! 16 hex digits of the configuration hash, so rerunning a configuration
//! lands in the same directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// SHA-256 over the command name and the canonical JSON of `config`.
pub fn config_hash<T: Serialize>(command: &str, config: &T) -> Result<String> {
    let json = serde_json::to_string(config).map_err(|e| Error::Parse(e.to_string()))?;
    let mut h = Sha256::new();
    h.update(command.as_bytes());
    h.update(b"\n");
    h.update(json.as_bytes());
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub code_version: String,
    pub seeds: Vec<u64>,
    pub config: serde_json::Value,
    /// Files written so far, relative to the run directory.
    pub outputs: Vec<String>,
    /// `None` while running, then the process exit code.
    pub exit_code: Option<i32>,
}

#[derive(Debug, Clone)]
pub struct RunDir {
    pub path: PathBuf,
    pub manifest: Manifest,
}

impl RunDir {
    /// Creates (or reopens) the run directory of `config` under `root`.
    pub fn create<T: Serialize>(root: &Path, command: &str, config: &T, seeds: Vec<u64>) -> Result<Self> {
        let hash = config_hash(command, config)?;
        let path = root.join(&hash[..16]);
        fs::create_dir_all(&path)?;
        let manifest = Manifest {
            command: command.into(),
            config_hash: hash,
            code_version: CODE_VERSION.into(),
            seeds,
            config: serde_json::to_value(config).map_err(|e| Error::Parse(e.to_string()))?,
            outputs: Vec::new(),
            exit_code: None,
        };
        let dir = RunDir { path, manifest };
        dir.write_manifest()?;
        Ok(dir)
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    fn note(&mut self, name: &str) -> Result<()> {
        if !self.manifest.outputs.iter().any(|o| o == name) {
            self.manifest.outputs.push(name.into());
            self.write_manifest()?;
        }
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let p = self.file(name);
        write_json(&p, value)?;
        self.note(name)?;
        Ok(p)
    }

    pub fn write_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<PathBuf> {
        let p = self.file(name);
        write_csv(&p, rows)?;
        self.note(name)?;
        Ok(p)
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        let p = self.file(name);
        atomic_write(&p, text.as_bytes())?;
        self.note(name)?;
        Ok(p)
    }

    /// Records a file written by other means.
    pub fn register(&mut self, name: &str) -> Result<()> {
        self.note(name)
    }

    pub fn finish(&mut self, exit_code: i32) -> Result<()> {
        self.manifest.exit_code = Some(exit_code);
        self.write_manifest()
    }

    fn write_manifest(&self) -> Result<()> {
        write_json(&self.path.join("manifest.json"), &self.manifest)
    }
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    read_json(&dir.join("manifest.json"))
}

/// Writes through a temporary file and a rename so readers never see a
/// partial file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    s.push('\n');
    atomic_write(path, s.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let s = fs::read_to_string(path)?;
    serde_json::from_str(&s).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Parse(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    atomic_write(path, &bytes)
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Parse(format!("{}: {e}", path.display()))))
        .collect()
}

/// Parses a TOML file into `T`, naming the file in parse errors.
pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let s = fs::read_to_string(path)?;
    toml::from_str(&s).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}
