//! Run manifests and file checksums.

use std::collections::BTreeMap;
use std::path::Path;

use camue::data::{EDGES_FILE, LABELS_FILE, META_FILE, TEXTS_FILE};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

/// Files that make up a dataset directory, in checksum order.
pub const DATASET_FILES: [&str; 4] = [META_FILE, EDGES_FILE, LABELS_FILE, TEXTS_FILE];

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub dataset_checksums: BTreeMap<String, String>,
    pub output_checksums: BTreeMap<String, String>,
    pub duration_secs: f64,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let json =
            serde_json::to_string_pretty(self).map_err(|e| camue::Error::Format(e.to_string()))?;
        write_file(path, json.as_bytes())
    }
}

pub fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| camue::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| camue::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(hex(&Sha256::digest(&bytes)))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Per-file checksums of the dataset files that exist in `dir`.
pub fn dataset_checksums(dir: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for name in DATASET_FILES {
        let path = dir.join(name);
        if path.exists() {
            out.insert(name.to_string(), sha256_file(&path)?);
        }
    }
    Ok(out)
}

/// One checksum over all dataset files, stable under directory moves.
pub fn dataset_digest(dir: &Path) -> Result<String, CliError> {
    let mut hasher = Sha256::new();
    for (name, sum) in dataset_checksums(dir)? {
        hasher.update(name.as_bytes());
        hasher.update([0]);
        hasher.update(sum.as_bytes());
        hasher.update([0]);
    }
    Ok(hex(&hasher.finalize()))
}

pub fn output_checksums(dir: &Path, names: &[&str]) -> Result<BTreeMap<String, String>, CliError> {
    names
        .iter()
        .map(|name| Ok((name.to_string(), sha256_file(&dir.join(name))?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_known_input() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("abc");
        std::fs::write(&path, "abc").unwrap();
        assert_eq!(
            sha256_file(&path).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
