use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{PipelineConfig, PipelineError};

pub const MANIFEST_VERSION: u32 = 1;
const LOCK_FILE: &str = ".marketverse.lock";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataDigest {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

impl DataDigest {
    pub fn of(path: &Path) -> Result<Self, PipelineError> {
        let data = fs::read(path).map_err(|e| PipelineError::io(path, e))?;
        Ok(DataDigest {
            path: path.to_path_buf(),
            sha256: hex::encode(Sha256::digest(&data)),
            bytes: data.len() as u64,
        })
    }
}

/// Config echo plus input digests; enough to re-run a pipeline exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub engine_version: String,
    pub config: PipelineConfig,
    pub data_files: Vec<DataDigest>,
    /// Output files relative to the output directory.
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(config: &PipelineConfig, data_files: Vec<DataDigest>, outputs: Vec<String>) -> Self {
        Manifest {
            format_version: MANIFEST_VERSION,
            engine_version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            data_files,
            outputs,
        }
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let m: Manifest = serde_json::from_str(&text)
            .map_err(|e| PipelineError::Manifest(format!("{}: {e}", path.display())))?;
        if m.format_version != MANIFEST_VERSION {
            return Err(PipelineError::Manifest(format!(
                "unsupported manifest version {} (expected {MANIFEST_VERSION})",
                m.format_version
            )));
        }
        Ok(m)
    }

    /// Re-hashes every data file and compares with the recorded digests.
    pub fn verify_data(&self) -> Result<(), PipelineError> {
        for recorded in &self.data_files {
            let now = DataDigest::of(&recorded.path)?;
            if now.sha256 != recorded.sha256 {
                return Err(PipelineError::Manifest(format!(
                    "{} changed: sha256 {} (manifest has {})",
                    recorded.path.display(),
                    now.sha256,
                    recorded.sha256
                )));
            }
        }
        Ok(())
    }
}

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self, PipelineError> {
        fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(OutputLock { path })
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(PipelineError::Locked(path)),
            Err(e) => Err(PipelineError::io(&path, e)),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
