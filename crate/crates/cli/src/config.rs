//! Layered run configuration: built-in defaults, then the command's table in
//! a TOML file, then explicit flags.

use std::path::{Path, PathBuf};

use decdm::{Error, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

pub const COMMANDS: &[&str] = &[
    "gen-data",
    "train",
    "translate",
    "cycle",
    "party-encode",
    "party-decode",
    "metrics",
];

/// Parsed `--config` file, keyed by command name.
#[derive(Debug, Default)]
pub struct ConfigFile {
    tables: toml::Table,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let tables: toml::Table =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        for (key, value) in &tables {
            if !COMMANDS.contains(&key.as_str()) {
                return Err(Error::Config(format!(
                    "unknown section [{key}] in {}",
                    path.display()
                )));
            }
            if !value.is_table() {
                return Err(Error::Config(format!("[{key}] must be a table")));
            }
        }
        Ok(Self { tables })
    }

    fn section(&self, command: &str) -> Option<Value> {
        self.tables
            .get(command)
            .map(|t| serde_json::to_value(t).unwrap_or(Value::Null))
    }
}

fn overlay(base: &mut Value, top: Value) {
    if let (Value::Object(b), Value::Object(t)) = (base, top) {
        for (k, v) in t {
            b.insert(k, v);
        }
    }
}

/// Merges defaults < file < flags. `flags` must skip unset options when
/// serialized. Unknown keys are rejected by `C`.
pub fn resolve<F: Serialize, C: Serialize + DeserializeOwned + Default>(
    command: &str,
    file: &ConfigFile,
    flags: &F,
) -> Result<C> {
    let mut merged =
        serde_json::to_value(C::default()).map_err(|e| Error::Internal(e.to_string()))?;
    if let Some(section) = file.section(command) {
        overlay(&mut merged, section);
    }
    overlay(
        &mut merged,
        serde_json::to_value(flags).map_err(|e| Error::Internal(e.to_string()))?,
    );
    serde_json::from_value(merged).map_err(|e| Error::Config(format!("{command}: {e}")))
}

pub fn required<T: Clone>(value: &Option<T>, key: &str) -> Result<T> {
    value
        .clone()
        .ok_or_else(|| Error::Config(format!("missing required setting '{key}'")))
}

/// Output paths are relative to the output directory when one is set.
pub fn output_path(out_dir: Option<&Path>, path: &Path) -> PathBuf {
    match out_dir {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path.to_path_buf(),
    }
}
