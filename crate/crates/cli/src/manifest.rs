//! Run manifests: the resolved configuration plus content hashes of every
//! input, written next to the primary output.

use std::path::{Path, PathBuf};

use decdm::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct InputHash {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub config: &'a C,
    pub inputs: Vec<InputHash>,
    pub outputs: Vec<PathBuf>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn absolute(path: &Path) -> PathBuf {
    std::path::absolute(path).unwrap_or_else(|_| path.to_path_buf())
}

/// Hashes a file, or every file directly inside a directory.
pub fn hash_inputs(paths: &[&Path]) -> Result<Vec<InputHash>> {
    let mut out = Vec::new();
    for path in paths {
        if path.is_dir() {
            for file in crate::commands::list_files(path)? {
                out.push(InputHash {
                    sha256: sha256_file(&file)?,
                    path: absolute(&file),
                });
            }
        } else {
            out.push(InputHash {
                path: absolute(path),
                sha256: sha256_file(path)?,
            });
        }
    }
    Ok(out)
}

/// `<primary>.manifest.json` beside the primary output.
pub fn manifest_path(primary: &Path) -> PathBuf {
    let mut name = primary.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    primary.with_file_name(name)
}

pub fn write<C: Serialize>(
    command: &str,
    config: &C,
    inputs: &[&Path],
    outputs: Vec<PathBuf>,
) -> Result<PathBuf> {
    let manifest = Manifest {
        tool: "decdm",
        version: env!("CARGO_PKG_VERSION"),
        command,
        config,
        inputs: hash_inputs(inputs)?,
        outputs,
    };
    let path = manifest_path(&manifest.outputs[0]);
    let text =
        serde_json::to_string_pretty(&manifest).map_err(|e| Error::Internal(e.to_string()))?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    Ok(path)
}
