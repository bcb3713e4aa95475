//! Content-addressed result cache. An entry is a directory named by the
//! request hash holding the artifact files and a manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const CACHE_ENV: &str = "LEL_CACHE_DIR";
const MANIFEST: &str = "manifest.json";

/// Files produced by one command plus the text it prints.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Artifact {
    pub files: Vec<(String, Vec<u8>)>,
    pub stdout: String,
}

impl Artifact {
    pub fn file(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }

    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let mut paths = Vec::with_capacity(self.files.len());
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
            paths.push(path);
        }
        Ok(paths)
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    files: Vec<String>,
    stdout: String,
}

/// Hex SHA-256 of the request parts, joined with NUL separators.
pub fn request_key(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone)]
pub struct Cache {
    root: PathBuf,
}

impl Cache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    /// `$LEL_CACHE_DIR` when set, otherwise `.cache` inside the output directory.
    pub fn locate(out_dir: &Path) -> Self {
        match std::env::var_os(CACHE_ENV) {
            Some(dir) if !dir.is_empty() => Self::new(dir),
            _ => Self::new(out_dir.join(".cache")),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// A stored artifact; incomplete or unreadable entries count as misses.
    pub fn load(&self, key: &str) -> Option<Artifact> {
        let dir = self.root.join(key);
        let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST)).ok()?).ok()?;
        let mut files = Vec::with_capacity(manifest.files.len());
        for name in manifest.files {
            let bytes = fs::read(dir.join(&name)).ok()?;
            files.push((name, bytes));
        }
        Some(Artifact {
            files,
            stdout: manifest.stdout,
        })
    }

    pub fn store(&self, key: &str, artifact: &Artifact) -> Result<()> {
        let dest = self.root.join(key);
        if dest.exists() {
            return Ok(());
        }
        let staging = self.root.join(format!("{key}.partial-{}", std::process::id()));
        artifact.write_to(&staging)?;
        let manifest = Manifest {
            files: artifact.files.iter().map(|(n, _)| n.clone()).collect(),
            stdout: artifact.stdout.clone(),
        };
        let path = staging.join(MANIFEST);
        let text = serde_json::to_vec(&manifest).expect("manifest serializes");
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        match fs::rename(&staging, &dest) {
            Ok(()) => Ok(()),
            // Another process stored the same entry first.
            Err(_) if dest.exists() => {
                let _ = fs::remove_dir_all(&staging);
                Ok(())
            }
            Err(e) => Err(CliError::io(&dest, e)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn store_then_load_is_identical() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::new(dir.path());
        let art = Artifact {
            files: vec![("a.csv".into(), b"x,y\n1,2\n".to_vec()), ("a.json".into(), b"{}".to_vec())],
            stdout: "{\"ok\":true}\n".into(),
        };
        let key = request_key(&["solve", "3", "3", "11"]);
        assert!(cache.load(&key).is_none());
        cache.store(&key, &art).unwrap();
        assert_eq!(cache.load(&key).unwrap(), art);
        cache.store(&key, &art).unwrap();
    }

    #[test]
    fn keys_separate_parts() {
        assert_ne!(request_key(&["ab", "c"]), request_key(&["a", "bc"]));
        assert_eq!(request_key(&["x"]).len(), 64);
    }
}
