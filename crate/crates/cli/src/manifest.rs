//! Stage cache manifest: records what each stage consumed and produced so an
//! unchanged stage can be skipped on re-runs.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

/// SHA-256 of a file's bytes, hex-encoded.
pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = std::fs::File::open(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file
            .read(&mut buf)
            .with_context(|| format!("cannot read {}", path.display()))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// SHA-256 of a string, hex-encoded.
pub fn sha256_str(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// One completed stage: the fingerprint of its settings and the hashes of
/// every file it read and wrote (paths relative to the work directory).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub config_hash: String,
    pub seed: u64,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

/// The on-disk cache, one record per stage name.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineManifest {
    pub stages: BTreeMap<String, StageRecord>,
}

impl PipelineManifest {
    /// Loads `manifest.json` from the work directory; absent or unreadable
    /// content yields an empty manifest (the cache is advisory).
    pub fn load(workdir: &Path) -> PipelineManifest {
        let path = workdir.join(MANIFEST_FILE);
        match std::fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text).unwrap_or_default(),
            Err(_) => PipelineManifest::default(),
        }
    }

    /// Writes the manifest back to the work directory.
    pub fn save(&self, workdir: &Path) -> Result<()> {
        let path = workdir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).context("cannot serialize manifest")?;
        std::fs::write(&path, text)
            .with_context(|| format!("cannot write {}", path.display()))?;
        Ok(())
    }

    /// True when `record` matches the stored one and every recorded output
    /// still exists with its recorded hash. `inputs` in the candidate must
    /// already carry current hashes.
    pub fn is_fresh(&self, workdir: &Path, stage: &str, candidate: &StageRecord) -> bool {
        let Some(stored) = self.stages.get(stage) else {
            return false;
        };
        if stored.config_hash != candidate.config_hash
            || stored.seed != candidate.seed
            || stored.inputs != candidate.inputs
        {
            return false;
        }
        stored.outputs.iter().all(|(rel, hash)| {
            matches!(sha256_file(&workdir.join(rel)), Ok(current) if current == *hash)
        })
    }
}
