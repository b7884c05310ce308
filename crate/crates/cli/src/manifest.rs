//! Artifact manifest: every run directory carries a `manifest.json`
//! listing its output files with SHA-256 content hashes, plus the run
//! status and any error that aborted it.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use bundlenet::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub status: String,
    pub error: Option<String>,
    pub outputs: Vec<ManifestEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex::encode(hasher.finalize())
}

fn read_with_context(path: &Path) -> Result<Vec<u8>> {
    fs::read(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// Hashes the named files (relative to `dir`) and writes the manifest
/// into `dir`. Output order follows the given list.
pub fn write_manifest(
    dir: &Path,
    outputs: &[String],
    status: &str,
    error: Option<String>,
) -> Result<Manifest> {
    let mut entries = Vec::with_capacity(outputs.len());
    for name in outputs {
        let bytes = read_with_context(&dir.join(name))?;
        entries.push(ManifestEntry {
            path: name.clone(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        });
    }
    let manifest = Manifest {
        status: status.to_string(),
        error,
        outputs: entries,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, text)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    Ok(manifest)
}

/// Loads a manifest and verifies every listed hash against the file on
/// disk, returning the mismatched paths (empty = all good).
pub fn verify_manifest(dir: &Path) -> Result<Vec<String>> {
    let text = read_with_context(&dir.join(MANIFEST_FILE))?;
    let manifest: Manifest = serde_json::from_slice(&text)?;
    let mut bad = Vec::new();
    for entry in &manifest.outputs {
        let bytes = read_with_context(&dir.join(&entry.path))?;
        if sha256_hex(&bytes) != entry.sha256 || bytes.len() as u64 != entry.bytes {
            bad.push(entry.path.clone());
        }
    }
    Ok(bad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_known_string() {
        // printf 'abc' | sha256sum
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_round_trips_and_verifies() {
        let dir = std::env::temp_dir().join(format!("manifest-test-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        fs::write(dir.join("a.csv"), "x\n1\n").unwrap();
        fs::write(dir.join("b.svg"), "<svg/>").unwrap();
        let written = write_manifest(
            &dir,
            &["a.csv".to_string(), "b.svg".to_string()],
            "ok",
            None,
        )
        .unwrap();
        assert_eq!(written.outputs.len(), 2);
        assert_eq!(written.outputs[0].bytes, 4);
        assert!(verify_manifest(&dir).unwrap().is_empty());
        // Tamper with a file: verification must flag it.
        fs::write(dir.join("a.csv"), "x\n2\n").unwrap();
        assert_eq!(verify_manifest(&dir).unwrap(), vec!["a.csv".to_string()]);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn error_status_is_preserved() {
        let dir = std::env::temp_dir().join(format!("manifest-err-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        write_manifest(&dir, &[], "error", Some("loss diverged".to_string())).unwrap();
        let text = fs::read_to_string(dir.join(MANIFEST_FILE)).unwrap();
        let manifest: Manifest = serde_json::from_str(&text).unwrap();
        assert_eq!(manifest.status, "error");
        assert_eq!(manifest.error.as_deref(), Some("loss diverged"));
        fs::remove_dir_all(&dir).unwrap();
    }
}
