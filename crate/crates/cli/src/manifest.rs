//! Run manifest: the completion marker of a dataset.
//!
//! It is written last, through a temporary file and a rename, so a directory
//! holding `manifest.json` always holds every artifact it lists.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArtifactEntry {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub toolkit_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub created_utc: String,
    pub artifacts: Vec<ArtifactEntry>,
}

pub fn sha256_file(path: &Path) -> Result<(u64, String), CliError> {
    let mut f = fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::MissingArtifact(path.to_path_buf()),
        _ => CliError::io(path, e),
    })?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut total = 0u64;
    loop {
        let n = f.read(&mut buf).map_err(|e| CliError::io(path, e))?;
        if n == 0 {
            break;
        }
        total += n as u64;
        h.update(&buf[..n]);
    }
    Ok((total, hex::encode(h.finalize())))
}

impl RunManifest {
    /// Checksum `files` (relative to `dir`).
    pub fn build(dir: &Path, files: &[&str], config_hash: String, seed: u64) -> Result<Self, CliError> {
        let artifacts = files
            .iter()
            .map(|f| {
                let (bytes, sha256) = sha256_file(&dir.join(f))?;
                Ok(ArtifactEntry {
                    file: f.to_string(),
                    bytes,
                    sha256,
                })
            })
            .collect::<Result<_, CliError>>()?;
        Ok(RunManifest {
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash,
            seed,
            created_utc: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            artifacts,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let tmp = dir.join(format!("{MANIFEST}.tmp"));
        let dst = dir.join(MANIFEST);
        crate::formats::write_json(&tmp, self)?;
        fs::rename(&tmp, &dst).map_err(|e| CliError::io(&dst, e))?;
        Ok(dst)
    }

    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST);
        let bytes = fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => CliError::MissingArtifact(path.clone()),
            _ => CliError::io(&path, e),
        })?;
        serde_json::from_slice(&bytes).map_err(|e| CliError::BadManifest {
            path,
            reason: e.to_string(),
        })
    }

    /// Check that every listed file exists with the recorded size and
    /// checksum, and that `required` files are listed.
    pub fn verify(&self, dir: &Path, required: &[&str]) -> Result<(), CliError> {
        let bad = |reason: String| CliError::BadManifest {
            path: dir.join(MANIFEST),
            reason,
        };
        for r in required {
            if !self.artifacts.iter().any(|a| a.file == *r) {
                return Err(bad(format!("{r} is not listed")));
            }
        }
        for a in &self.artifacts {
            if a.file.contains(['/', '\\']) || a.file == ".." {
                return Err(bad(format!("artifact name {:?} leaves the dataset", a.file)));
            }
            let (bytes, sha) = sha256_file(&dir.join(&a.file))?;
            if bytes != a.bytes || sha != a.sha256 {
                return Err(bad(format!("checksum mismatch for {}", a.file)));
            }
        }
        Ok(())
    }

    pub fn entry(&self, file: &str) -> Option<&ArtifactEntry> {
        self.artifacts.iter().find(|a| a.file == file)
    }
}
