//! Train configuration assembly: built-in defaults, then a TOML file, then
//! command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use sdgar_core::TrainConfig;
use toml::{Table, Value};

use crate::CliError;

/// Keys a config file may hold besides the training parameters.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct FilePaths {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub resume: Option<PathBuf>,
    pub threads: Option<usize>,
}

pub fn read_table(path: &Path) -> Result<Table, CliError> {
    if !path.exists() {
        return Err(CliError::usage(format!("input not found: {}", path.display())));
    }
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    text.parse::<Table>()
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn take_path(table: &mut Table, key: &str) -> Result<Option<PathBuf>, CliError> {
    match table.remove(key) {
        None => Ok(None),
        Some(Value::String(s)) => Ok(Some(PathBuf::from(s))),
        Some(other) => Err(CliError::usage(format!("config key {key} must be a string, got {other}"))),
    }
}

/// Split path-like keys off a file table; the remainder must be training
/// parameters.
pub fn take_paths(table: &mut Table) -> Result<FilePaths, CliError> {
    let threads = match table.remove("threads") {
        None => None,
        Some(Value::Integer(n)) if n >= 0 => Some(n as usize),
        Some(other) => {
            return Err(CliError::usage(format!(
                "config key threads must be a non-negative integer, got {other}"
            )))
        }
    };
    Ok(FilePaths {
        data: take_path(table, "data")?,
        out: take_path(table, "out")?,
        resume: take_path(table, "resume")?,
        threads,
    })
}

/// Deserialize `table` with `overrides` applied on top. Unknown keys and
/// invalid values are usage errors that name the field.
pub fn resolve(mut table: Table, overrides: Table) -> Result<TrainConfig, CliError> {
    table.extend(overrides);
    let config: TrainConfig = Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::usage(format!("config: {}", e.message())))?;
    config.validate().map_err(|e| CliError::usage(e.to_string()))?;
    Ok(config)
}

/// The effective configuration, written next to the run outputs.
pub fn render(config: &TrainConfig, data: &Path, resume: Option<&Path>, threads: usize) -> String {
    let mut table = Table::try_from(config).expect("config serializes to a table");
    table.insert("data".into(), Value::String(data.display().to_string()));
    if let Some(r) = resume {
        table.insert("resume".into(), Value::String(r.display().to_string()));
    }
    table.insert("threads".into(), Value::Integer(threads as i64));
    toml::to_string(&table).expect("table renders")
}
