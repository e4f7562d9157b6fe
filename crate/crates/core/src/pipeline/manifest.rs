//! `manifest.json` links every artifact to its content hash, the config and
//! the seed. Wall-clock timings live in `timings.json` so that the manifest
//! stays byte-reproducible.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::RunConfig;
use crate::binio::{read_file, write_file};
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TIMINGS_FILE: &str = "timings.json";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub master_seed: u64,
    /// Upstream artifacts consumed, by path relative to the output directory.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub code_version: String,
    pub config: RunConfig,
    pub stages: BTreeMap<String, StageRecord>,
}

impl RunManifest {
    pub fn new(config: &RunConfig) -> Self {
        Self {
            code_version: crate::CODE_VERSION.to_string(),
            config: relative_config(config),
            stages: BTreeMap::new(),
        }
    }

    /// Reads `out/manifest.json`, or starts a fresh one when absent or when
    /// it was written under a different configuration.
    pub fn open(out: &Path, config: &RunConfig) -> Result<Self> {
        let path = out.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Self::new(config));
        }
        let m: RunManifest = serde_json::from_slice(&read_file(&path)?)
            .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
        if m.config != relative_config(config) || m.code_version != crate::CODE_VERSION {
            return Ok(Self::new(config));
        }
        Ok(m)
    }

    pub fn record(&mut self, out: &Path, stage: &str, inputs: &[PathBuf], outputs: &[PathBuf]) -> Result<()> {
        let hashes = |paths: &[PathBuf]| -> Result<BTreeMap<String, String>> {
            paths
                .iter()
                .map(|p| Ok((rel_name(p), hash_file(&out.join(p))?)))
                .collect()
        };
        self.stages.insert(
            stage.to_string(),
            StageRecord {
                master_seed: self.config.master_seed,
                inputs: hashes(inputs)?,
                outputs: hashes(outputs)?,
            },
        );
        write_file(&out.join(MANIFEST_FILE), self.to_json().as_bytes())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }
}

/// The manifest sits inside the output directory, so it records that
/// directory as `.`; runs that differ only in where they write stay
/// byte-identical.
fn relative_config(config: &RunConfig) -> RunConfig {
    RunConfig {
        out_dir: PathBuf::from("."),
        ..config.clone()
    }
}

fn rel_name(p: &Path) -> String {
    p.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn hash_file(path: &Path) -> Result<String> {
    Ok(hash_bytes(&read_file(path)?))
}

/// Files below `dir`, relative and sorted.
pub fn list_files(dir: &Path) -> Result<Vec<PathBuf>> {
    fn walk(root: &Path, rel: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        let here = root.join(rel);
        let entries = std::fs::read_dir(&here).map_err(|e| Error::io(&here, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&here, e))?;
            let child = rel.join(entry.file_name());
            let kind = entry.file_type().map_err(|e| Error::io(root.join(&child), e))?;
            if kind.is_dir() {
                walk(root, &child, out)?;
            } else {
                out.push(child);
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(dir, Path::new(""), &mut out)?;
    out.sort();
    Ok(out)
}

/// One hash over the relative names and contents of every file in `dir`.
pub fn hash_tree(dir: &Path) -> Result<String> {
    let mut h = Sha256::new();
    for rel in list_files(dir)? {
        let name = rel_name(&rel);
        h.update((name.len() as u64).to_le_bytes());
        h.update(name.as_bytes());
        let bytes = read_file(&dir.join(&rel))?;
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Adds `seconds` for `stage` to `timings.json`.
pub fn record_timing(out: &Path, stage: &str, seconds: f64) -> Result<()> {
    let path = out.join(TIMINGS_FILE);
    let mut t: BTreeMap<String, f64> = if path.exists() {
        serde_json::from_slice(&read_file(&path)?).unwrap_or_default()
    } else {
        BTreeMap::new()
    };
    t.insert(stage.to_string(), seconds);
    let json = serde_json::to_string_pretty(&t).expect("timings serialize") + "\n";
    write_file(&path, json.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_value() {
        assert_eq!(
            hash_bytes(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn tree_hash_tracks_names_and_content() {
        let d = tempfile::tempdir().unwrap();
        write_file(&d.path().join("a/x.bin"), b"1").unwrap();
        write_file(&d.path().join("b.txt"), b"2").unwrap();
        let h1 = hash_tree(d.path()).unwrap();
        assert_eq!(list_files(d.path()).unwrap(), vec![PathBuf::from("a/x.bin"), PathBuf::from("b.txt")]);
        write_file(&d.path().join("b.txt"), b"3").unwrap();
        assert_ne!(hash_tree(d.path()).unwrap(), h1);
    }
}
