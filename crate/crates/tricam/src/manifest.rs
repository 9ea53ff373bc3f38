//! Run manifests and artifact hashing. Every subcommand writes one manifest
//! at the end of a successful run; re-running with identical inputs must
//! reproduce identical artifact hashes (the manifest itself also records
//! wall time, which is excluded from that guarantee).

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::Read;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtifactRef {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub inputs: Vec<ArtifactRef>,
    pub outputs: Vec<ArtifactRef>,
    pub duration_s: f64,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let file =
        std::fs::File::open(path).with_context(|| format!("hashing {}", path.display()))?;
    let mut reader = std::io::BufReader::new(file);
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = reader.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

pub fn artifact(path: &Path) -> Result<ArtifactRef> {
    Ok(ArtifactRef { path: path.to_path_buf(), sha256: sha256_file(path)? })
}

/// Serialize as pretty JSON and rename into place so readers never observe
/// a half-written file.
pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(&tmp, text).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json_atomic(&dir.join("run_manifest.json"), self)
    }

    pub fn read(dir: &Path) -> Result<RunManifest> {
        let path = dir.join("run_manifest.json");
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_and_content_sensitive() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("blob");
        std::fs::write(&p, b"hello").unwrap();
        let h1 = sha256_file(&p).unwrap();
        let h2 = sha256_file(&p).unwrap();
        assert_eq!(h1, h2);
        std::fs::write(&p, b"hellp").unwrap();
        assert_ne!(h1, sha256_file(&p).unwrap());
    }
}
