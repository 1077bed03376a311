//! Provenance block embedded in every report.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, Read};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const TOOL: &str = "guardlab";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Everything needed to reproduce a run. Two runs with equal manifests
/// produce identical reports apart from the two timestamps.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: Vec<String>,
    pub config: Value,
    /// Input path as given on the command line → SHA-256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

pub fn file_digest(path: &Path) -> io::Result<String> {
    let mut file = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

impl RunManifest {
    pub fn start(command: Vec<String>) -> Self {
        RunManifest {
            tool: TOOL,
            version: VERSION,
            command,
            config: Value::Null,
            inputs: BTreeMap::new(),
            seed: None,
            started_unix_ms: now_ms(),
            finished_unix_ms: 0,
        }
    }

    pub fn config(&mut self, config: &impl Serialize) -> Result<(), CliError> {
        self.config = serde_json::to_value(config).map_err(|e| CliError::Internal(e.to_string()))?;
        Ok(())
    }

    /// Records the digest of an input file. Call before reading it so a
    /// missing file surfaces as a data error naming the path.
    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        let digest = file_digest(path).map_err(|source| {
            CliError::Data(guardlab_core::Error::Io {
                path: path.to_path_buf(),
                source,
            })
        })?;
        self.inputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    pub fn finish(&mut self) {
        self.finished_unix_ms = now_ms();
    }
}

/// A report body with its manifest in front.
#[derive(Serialize)]
pub struct Report<'a, T: Serialize> {
    pub manifest: &'a RunManifest,
    #[serde(flatten)]
    pub body: T,
}
