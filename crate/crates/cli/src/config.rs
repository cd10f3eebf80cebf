//! TOML experiment files with one table per command.
//!
//! Values are resolved as command line > config table > built-in default.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult};

pub const COMMANDS: [&str; 9] = [
    "constants",
    "fiber-spectrum",
    "green-coeffs",
    "free-decay",
    "evolve",
    "resolvent-fit",
    "lap-scan",
    "high-energy-scan",
    "acceptance",
];

#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    tables: Map<String, Value>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let value = serde_json::to_value(table).map_err(|e| CliError::Config(e.to_string()))?;
        let Value::Object(tables) = value else { unreachable!("a TOML document is a table") };
        for (key, v) in &tables {
            if !COMMANDS.contains(&key.as_str()) {
                return Err(CliError::Config(format!(
                    "unknown section [{key}]; expected one of {}",
                    COMMANDS.join(", ")
                )));
            }
            if !v.is_object() {
                return Err(CliError::Config(format!("`{key}` must be a table")));
            }
        }
        Ok(Self { tables })
    }

    fn section(&self, name: &str) -> Map<String, Value> {
        match self.tables.get(name) {
            Some(Value::Object(m)) => m.clone(),
            _ => Map::new(),
        }
    }

    /// Overlay the command-line arguments on the `[name]` table.
    ///
    /// Absent options and unset boolean flags leave the file value in place.
    pub fn resolve<T>(&self, name: &str, cli: &T) -> CliResult<T>
    where
        T: Serialize + DeserializeOwned + Default,
    {
        let known = object(&T::default())?;
        let mut merged = self.section(name);
        if let Some(bad) = merged.keys().find(|k| !known.contains_key(*k)) {
            let mut keys: Vec<&String> = known.keys().collect();
            keys.sort();
            let keys: Vec<&str> = keys.into_iter().map(String::as_str).collect();
            return Err(CliError::Config(format!(
                "unknown key `{bad}` in [{name}]; accepted keys: {}",
                keys.join(", ")
            )));
        }
        for (k, v) in object(cli)? {
            if !matches!(v, Value::Null | Value::Bool(false)) {
                merged.insert(k, v);
            }
        }
        serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::Config(format!("[{name}]: {e}")))
    }
}

fn object<T: Serialize>(v: &T) -> CliResult<Map<String, Value>> {
    match serde_json::to_value(v) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(CliError::Serialize("argument set is not a map".into())),
        Err(e) => Err(CliError::Serialize(e.to_string())),
    }
}
