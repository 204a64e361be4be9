//! Run bookkeeping: every file read or written goes through [`Run`], which
//! records its digest for the manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl FileDigest {
    fn of(path: &Path, bytes: &[u8]) -> Self {
        FileDigest { path: path.display().to_string(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Written next to the primary output as `<output>.manifest.json`. Holds no
/// timestamps, so re-running an equal manifest reproduces it byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub argv: Vec<String>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub config: Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub summary: Value,
}

pub struct Run {
    out_dir: Option<PathBuf>,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
}

impl Run {
    pub fn new(out_dir: Option<PathBuf>) -> Self {
        Run { out_dir, inputs: Vec::new(), outputs: Vec::new() }
    }

    pub fn read(&mut self, path: &Path) -> CliResult<Vec<u8>> {
        let bytes = fs::read(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
        self.inputs.push(FileDigest::of(path, &bytes));
        Ok(bytes)
    }

    pub fn read_string(&mut self, path: &Path) -> CliResult<String> {
        let bytes = self.read(path)?;
        String::from_utf8(bytes).map_err(|e| CliError::Config { path: path.to_path_buf(), message: e.to_string() })
    }

    /// Output paths are taken relative to `--out-dir` when one is given.
    pub fn output_path(&self, path: &Path) -> PathBuf {
        match &self.out_dir {
            Some(dir) if path.is_relative() => dir.join(path),
            _ => path.to_path_buf(),
        }
    }

    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.output_path(path);
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|source| CliError::Io { path: parent.to_path_buf(), source })?;
        }
        fs::write(&path, bytes).map_err(|source| CliError::Io { path: path.clone(), source })?;
        self.outputs.push(FileDigest::of(&path, bytes));
        Ok(path)
    }

    pub fn finish(self, context: ManifestContext, primary: &Path, config: Value, summary: Value) -> CliResult<PathBuf> {
        let manifest = RunManifest {
            tool: "routescope".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            subcommand: context.subcommand,
            argv: context.argv,
            seed: context.seed,
            threads: context.threads,
            config,
            inputs: self.inputs,
            outputs: self.outputs,
            summary,
        };
        let path = manifest_path(&self.out_dir.map_or_else(
            || primary.to_path_buf(),
            |d| {
                if primary.is_relative() {
                    d.join(primary)
                } else {
                    primary.to_path_buf()
                }
            },
        ));
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        fs::write(&path, bytes).map_err(|source| CliError::Io { path: path.clone(), source })?;
        Ok(path)
    }
}

pub struct ManifestContext {
    pub subcommand: String,
    pub argv: Vec<String>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

pub fn manifest_path(primary: &Path) -> PathBuf {
    let mut name = primary.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

/// Digest of a file on disk, for replay checks.
pub fn digest_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    Ok(sha256_hex(&bytes))
}
