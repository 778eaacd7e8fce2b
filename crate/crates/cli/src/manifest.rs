//! Run manifests: enough to replay a run and to check its outputs afterwards.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Every config key in effect, including the seed and filled-in defaults.
    pub config: BTreeMap<String, String>,
    pub seed: u64,
    pub tool_version: String,
    pub started: String,
    pub finished: String,
    /// Output path relative to the run directory, mapped to its SHA-256.
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).context("malformed run manifest")
    }

    /// Recompute every digest under `dir` and fail on the first mismatch.
    pub fn verify_outputs(&self, dir: &Path) -> Result<()> {
        for (name, digest) in &self.outputs {
            let bytes = fs::read(dir.join(name)).with_context(|| format!("missing output {name}"))?;
            let actual = sha256_hex(&bytes);
            if &actual != digest {
                bail!("digest mismatch for {name}: manifest {digest}, file {actual}");
            }
        }
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn looks_like_manifest(text: &str) -> bool {
    text.trim_start().starts_with('{')
}
