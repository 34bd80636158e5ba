//! Output directory bookkeeping: every file written by a run is hashed and
//! attributed to the stage that produced it.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::hex;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub sha256: String,
    pub bytes: u64,
    pub stage: String,
}

#[derive(Debug)]
pub struct Outputs {
    root: PathBuf,
    files: BTreeMap<String, FileRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

impl Outputs {
    pub fn new(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            files: BTreeMap::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn files(&self) -> &BTreeMap<String, FileRecord> {
        &self.files
    }

    pub fn into_files(self) -> BTreeMap<String, FileRecord> {
        self.files
    }

    pub fn write(&mut self, stage: &str, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.path(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&path, bytes)?;
        self.insert(stage, rel, bytes);
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, stage: &str, rel: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_vec_pretty(value)?;
        text.push(b'\n');
        self.write(stage, rel, &text)
    }

    /// CSV with a header row taken from the field names of `T`. Zero rows
    /// give an empty file.
    pub fn write_csv<T: Serialize>(&mut self, stage: &str, rel: &str, rows: &[T]) -> Result<()> {
        self.write(stage, rel, &csv_bytes(rows)?)
    }

    /// Registers a file some other component already wrote under the root.
    pub fn record(&mut self, stage: &str, path: &Path) -> Result<()> {
        let bytes = fs::read(path)?;
        let rel = path
            .strip_prefix(&self.root)
            .unwrap_or(path)
            .components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect::<Vec<_>>()
            .join("/");
        self.insert(stage, &rel, &bytes);
        Ok(())
    }

    fn insert(&mut self, stage: &str, rel: &str, bytes: &[u8]) {
        self.files.insert(
            rel.to_string(),
            FileRecord {
                sha256: sha256_hex(bytes),
                bytes: bytes.len() as u64,
                stage: stage.to_string(),
            },
        );
    }
}

pub fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    w.into_inner().map_err(|e| crate::error::CliError::Runtime(e.to_string()))
}
