//! Layered JSON configuration: typed defaults, then a config file, then
//! `--set key=value` overrides, then strict deserialization.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Contents of a `--config` file. A manifest written by a previous run is
/// also accepted, in which case its `config` and `seed` are used.
pub struct FileConfig {
    pub config: Value,
    pub seed: Option<u64>,
}

pub fn read_config_file(path: &Path, subcommand: &str) -> Result<FileConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| ConfigError(format!("config {} is not valid JSON: {e}", path.display())))?;
    let Value::Object(mut obj) = value else {
        return Err(ConfigError(format!("config {} must be a JSON object", path.display())));
    };
    if obj.contains_key("subcommand") && obj.contains_key("config") {
        let sub = obj.get("subcommand").and_then(Value::as_str).unwrap_or_default();
        if sub != subcommand {
            return Err(ConfigError(format!(
                "manifest {} is for `{sub}`, not `{subcommand}`",
                path.display()
            )));
        }
        let seed = obj.get("seed").and_then(Value::as_u64);
        let config = obj.remove("config").unwrap_or(Value::Object(Map::new()));
        return Ok(FileConfig { config, seed });
    }
    Ok(FileConfig { config: Value::Object(obj), seed: None })
}

/// Recursively overlays `top` onto `base`; objects merge, everything else
/// is replaced.
pub fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Applies `key=value` with a dotted key. The value is parsed as JSON when
/// possible and taken as a string otherwise.
pub fn apply_set(root: &mut Value, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError(format!("override {assignment:?} is not of the form key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(ConfigError(format!("override {assignment:?} has an empty key segment")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let Value::Object(map) = node else {
            return Err(ConfigError(format!("override key `{key}`: `{}` is not an object", parts[..i].join("."))));
        };
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    Ok(())
}

/// Defaults, then the file, then overrides, deserialized strictly.
pub fn resolve<T: Serialize + DeserializeOwned + Default>(
    file: Option<Value>,
    sets: &[String],
) -> Result<T, ConfigError> {
    let mut value = serde_json::to_value(T::default()).map_err(|e| ConfigError(e.to_string()))?;
    if let Some(f) = file {
        merge(&mut value, f);
    }
    for s in sets {
        apply_set(&mut value, s)?;
    }
    serde_json::from_value(value).map_err(|e| ConfigError(format!("invalid configuration: {e}")))
}

/// `key = value` lines for every leaf of the default configuration.
pub fn describe_defaults<T: Serialize + Default>() -> String {
    let mut lines = Vec::new();
    if let Ok(v) = serde_json::to_value(T::default()) {
        flatten("", &v, &mut lines);
    }
    let width = lines.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut out = String::from("Parameters (set with --set key=value; defaults shown):\n");
    for (k, v) in lines {
        let k = k.strip_prefix("solvers.").unwrap_or(&k);
        out.push_str(&format!("  {k:<width$}  {v}\n"));
    }
    out
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, child, out);
            }
        }
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn dotted_overrides() {
        let mut v = json!({"gap": {"mu_v2": 0.01}, "N": 500});
        apply_set(&mut v, "gap.mu_v2=0.02").unwrap();
        apply_set(&mut v, "N=200").unwrap();
        apply_set(&mut v, "algorithms=[\"gap\"]").unwrap();
        apply_set(&mut v, "name=abc").unwrap();
        assert_eq!(v, json!({"gap": {"mu_v2": 0.02}, "N": 200, "algorithms": ["gap"], "name": "abc"}));
        assert!(apply_set(&mut v, "novalue").is_err());
        assert!(apply_set(&mut v, "N.x=1").is_err());
        assert!(apply_set(&mut v, "gap..x=1").is_err());
    }

    #[test]
    fn merge_is_deep() {
        let mut base = json!({"a": {"b": 1, "c": 2}, "d": [1, 2]});
        merge(&mut base, json!({"a": {"c": 3}, "d": [5]}));
        assert_eq!(base, json!({"a": {"b": 1, "c": 3}, "d": [5]}));
    }
}
