//! Training configuration loading with dotted `key=value` overrides.

use std::path::Path;

use igann::train::TrainConfig;
use serde_json::{Map, Value};

use crate::CliError;

/// Parses `a.b.c=value`. The value is read as JSON when it parses, and as a
/// plain string otherwise, so `--set system_id=sine-3d` needs no quoting.
pub fn parse_override(raw: &str) -> Result<(Vec<String>, Value), CliError> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override `{raw}` is not of the form key=value")))?;
    let path: Vec<String> = key.trim().split('.').map(str::to_owned).collect();
    if path.iter().any(String::is_empty) {
        return Err(CliError::Usage(format!("override `{raw}` has an empty key segment")));
    }
    let value = serde_json::from_str(value.trim()).unwrap_or_else(|_| Value::String(value.to_owned()));
    Ok((path, value))
}

pub fn apply_override(doc: &mut Value, path: &[String], value: Value) -> Result<(), CliError> {
    let mut cur = doc;
    for (i, seg) in path.iter().enumerate() {
        if cur.is_null() {
            *cur = Value::Object(Map::new());
        }
        let obj = cur.as_object_mut().ok_or_else(|| {
            CliError::Config(format!("cannot set `{}`: `{}` is not an object", path.join("."), path[..i].join(".")))
        })?;
        if i + 1 == path.len() {
            obj.insert(seg.clone(), value);
            return Ok(());
        }
        cur = obj.entry(seg.clone()).or_insert(Value::Null);
    }
    Ok(())
}

/// Reads the config file (or starts from `{}`), applies overrides and
/// deserializes with the failing path in the error message.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<(TrainConfig, Value), CliError> {
    let mut doc = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => Value::Object(Map::new()),
    };
    if !doc.is_object() {
        return Err(CliError::Config("config root must be a JSON object".into()));
    }
    for raw in overrides {
        let (p, v) = parse_override(raw)?;
        apply_override(&mut doc, &p, v)?;
    }
    let config = from_value(&doc)?;
    config.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok((config, doc))
}

pub fn from_value(doc: &Value) -> Result<TrainConfig, CliError> {
    serde_path_to_error::deserialize(doc).map_err(|e| {
        let path = e.path().to_string();
        let at = if path == "." { "config root".to_owned() } else { format!("`{path}`") };
        CliError::Config(format!("at {at}: {}", e.into_inner()))
    })
}
