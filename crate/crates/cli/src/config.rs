//! Optional TOML configuration merged under command-line flags.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::CliError;

/// Parsed configuration file as JSON.
pub fn load(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let table: toml::Table =
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
    serde_json::to_value(table).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}

/// Table at `path` inside the configuration, if any.
pub fn section<'a>(config: &'a Value, path: &[&str]) -> Option<&'a Value> {
    path.iter().try_fold(config, |v, key| v.get(key))
}

/// `flags` with unset entries (null or empty list) filled from `file`.
pub fn merge<T: Serialize + DeserializeOwned>(flags: &T, file: Option<&Value>) -> Result<T, CliError> {
    let Some(file) = file else {
        return Ok(serde_json::from_value(serde_json::to_value(flags).expect("arguments serialize")).expect("round trip"));
    };
    let Value::Object(file) = file else {
        return Err(CliError::Usage("configuration section must be a table".into()));
    };
    let Value::Object(cli) = serde_json::to_value(flags).expect("arguments serialize") else {
        unreachable!("argument structs serialize to objects")
    };
    let mut merged: Map<String, Value> = Map::new();
    for (k, v) in file {
        if !v.is_object() {
            merged.insert(k.clone(), v.clone());
        }
    }
    for (k, v) in cli {
        let unset = v.is_null() || v.as_array().is_some_and(Vec::is_empty);
        if !unset || !merged.contains_key(&k) {
            merged.insert(k, v);
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::Usage(format!("configuration: {e}")))
}
