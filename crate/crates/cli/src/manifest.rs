use std::path::{Path, PathBuf};

use dcp::datasets::ShiftSpec;
use dcp::trainer::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const TOOL_VERSION: &str = concat!("dcp ", env!("CARGO_PKG_VERSION"));
pub const DATA_MANIFEST: &str = "data_manifest.json";
pub const RUN_MANIFEST: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String, CliError> {
    Ok(sha256_hex(&read_input(path)?))
}

/// Reads a required input, mapping a missing file to exit code 1.
pub fn read_input(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::missing(path, e))
}

/// What `gen-data` produced and from which generator settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataManifest {
    pub tool_version: String,
    pub kind: String,
    pub seed: u64,
    pub spec: serde_json::Value,
    pub spec_sha256: String,
    pub files: Vec<FileFingerprint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileFingerprint {
    pub path: PathBuf,
    pub sha256: String,
}

/// Content hash of a dataset file, plus its generator seed and spec hash
/// when a data manifest next to it lists the file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetFingerprint {
    pub path: PathBuf,
    pub sha256: String,
    pub rows: usize,
    pub dim: usize,
    pub seed: Option<u64>,
    pub spec_sha256: Option<String>,
}

impl DatasetFingerprint {
    pub fn of(path: &Path, rows: usize, dim: usize) -> Result<Self, CliError> {
        let sha256 = file_sha256(path)?;
        let generator = path
            .parent()
            .map(|d| d.join(DATA_MANIFEST))
            .and_then(|p| std::fs::read_to_string(p).ok())
            .and_then(|t| serde_json::from_str::<DataManifest>(&t).ok())
            .filter(|m| m.files.iter().any(|f| f.sha256 == sha256));
        Ok(Self {
            path: path.to_path_buf(),
            sha256,
            rows,
            dim,
            seed: generator.as_ref().map(|m| m.seed),
            spec_sha256: generator.map(|m| m.spec_sha256),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutputs {
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
}

/// Everything needed to repeat a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config: TrainConfig,
    pub source: DatasetFingerprint,
    pub target: DatasetFingerprint,
    pub outputs: RunOutputs,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let bytes = read_input(path)?;
        serde_json::from_slice(&bytes).map_err(|e| CliError::Usage(format!("{}: not a run manifest: {e}", path.display())))
    }

    /// Fails when a dataset file changed since the manifest was written.
    pub fn verify_inputs(&self) -> Result<(), CliError> {
        for fp in [&self.source, &self.target] {
            let now = file_sha256(&fp.path)?;
            if now != fp.sha256 {
                return Err(CliError::Usage(format!(
                    "{} changed since the manifest was written (sha256 {now}, expected {})",
                    fp.path.display(),
                    fp.sha256
                )));
            }
        }
        Ok(())
    }
}

pub fn spec_hash(spec: &ShiftSpec) -> String {
    sha256_hex(serde_json::to_string(spec).expect("spec serializes").as_bytes())
}
