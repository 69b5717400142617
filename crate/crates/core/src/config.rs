//! TOML config files with dotted-key overrides.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Parses the right-hand side of an override as a TOML value, falling back
/// to a bare string (`name=foo` needs no quotes).
fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies `key.path=value` overrides in order. Intermediate tables are
/// created as needed; a non-table on the path is an error.
pub fn apply_overrides(root: &mut toml::Value, overrides: &[String]) -> Result<()> {
    for ov in overrides {
        let (key, raw) = ov
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override '{ov}' is not of the form key=value")))?;
        let parts: Vec<&str> = key.trim().split('.').collect();
        if parts.iter().any(|p| p.is_empty()) {
            return Err(Error::Config(format!("override key '{key}' has an empty segment")));
        }
        let mut cur = &mut *root;
        for p in &parts[..parts.len() - 1] {
            let table = cur
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("override '{key}': '{p}' is not inside a table")))?;
            cur = table
                .entry(p.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        }
        let table = cur
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override '{key}' does not address a table entry")))?;
        table.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    }
    Ok(())
}

pub fn to_value<T: Serialize>(cfg: &T) -> Result<toml::Value> {
    toml::Value::try_from(cfg).map_err(|e| Error::Config(format!("cannot serialise config: {e}")))
}

pub fn from_value<T: DeserializeOwned>(v: toml::Value) -> Result<T> {
    v.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))
}

/// Merges overrides into a typed config.
pub fn with_overrides<T: Serialize + DeserializeOwned>(cfg: &T, overrides: &[String]) -> Result<T> {
    if overrides.is_empty() {
        return from_value(to_value(cfg)?);
    }
    let mut v = to_value(cfg)?;
    apply_overrides(&mut v, overrides)?;
    from_value(v)
}

pub fn read_toml(path: &Path) -> Result<toml::Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.parse::<toml::Table>()
        .map(toml::Value::Table)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Loads a typed config from a TOML file and applies overrides.
pub fn load<T: DeserializeOwned>(path: &Path, overrides: &[String]) -> Result<T> {
    let mut v = read_toml(path)?;
    apply_overrides(&mut v, overrides)?;
    from_value(v)
}

pub fn to_toml_string<T: Serialize>(cfg: &T) -> Result<String> {
    toml::to_string_pretty(cfg).map_err(|e| Error::Config(format!("cannot serialise config: {e}")))
}
