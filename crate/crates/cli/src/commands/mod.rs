pub mod cycle;
pub mod gen_data;
pub mod metrics;
pub mod party;
pub mod train;
pub mod translate;

use std::path::{Path, PathBuf};

use decdm::diffusion::load_checkpoint;
use decdm::io::read_gray;
use decdm::{DenoiserModel, Error, GrayPatch, Result};

use crate::config::{output_path, ConfigFile};

pub struct Ctx {
    pub file: ConfigFile,
    pub out_dir: Option<PathBuf>,
}

impl Ctx {
    pub fn output(&self, path: &Path) -> PathBuf {
        output_path(self.out_dir.as_deref(), path)
    }
}

pub fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

pub fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent().filter(|p| !p.as_os_str().is_empty()) {
        Some(parent) => create_dir(parent),
        None => Ok(()),
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    ensure_parent(path)?;
    std::fs::write(path, bytes).map_err(|e| io_err(path, e))
}

pub fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

/// Regular files directly inside `dir`, sorted by name.
pub fn list_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| io_err(dir, e))? {
        let path = entry.map_err(|e| io_err(dir, e))?.path();
        if path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn is_image(path: &Path) -> bool {
    matches!(
        path.extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref(),
        Some("png" | "pgm" | "pnm")
    )
}

/// Images directly inside `dir`, sorted by name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    Ok(list_files(dir)?
        .into_iter()
        .filter(|p| is_image(p))
        .collect())
}

pub fn read_images(paths: &[PathBuf]) -> Result<Vec<GrayPatch>> {
    paths.iter().map(|p| read_gray(p)).collect()
}

pub fn load_model(path: &Path) -> Result<DenoiserModel> {
    load_checkpoint(path)
}

pub fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}
