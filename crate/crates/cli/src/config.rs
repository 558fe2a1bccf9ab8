//! `--config` files: JSON objects whose keys mirror the long flags.

use std::fs;

use serde_json::Value;

fn config_path(argv: &[String]) -> Option<String> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(p.to_string());
        }
    }
    None
}

fn scalar(v: &Value) -> Result<String, String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        other => Err(format!("unsupported config value {other}")),
    }
}

/// Append the settings of the config file to `argv`, skipping flags already given.
pub fn merge_config(mut argv: Vec<String>) -> Result<Vec<String>, String> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = fs::read_to_string(&path).map_err(|e| format!("{path}: {e}"))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| format!("{path}: {e}"))?;
    let Value::Object(map) = value else {
        return Err(format!("{path}: expected a JSON object"));
    };
    let given = |flag: &str| {
        argv.iter()
            .any(|a| a == flag || a.starts_with(&format!("{flag}=")))
    };
    let mut extra = Vec::new();
    for (key, v) in map {
        if key == "config" || key == "command" {
            continue;
        }
        let flag = format!("--{}", key.replace('_', "-"));
        if given(&flag) {
            continue;
        }
        match &v {
            Value::Bool(true) => extra.push(flag),
            Value::Bool(false) | Value::Null => {}
            Value::Array(items) => {
                if items.is_empty() {
                    continue;
                }
                // repeatable NAME=VALUE flags take one item per occurrence
                if key == "map" || key == "par" {
                    for item in items {
                        extra.push(flag.clone());
                        extra.push(scalar(item)?);
                    }
                } else {
                    let parts: Vec<String> = items.iter().map(scalar).collect::<Result<_, _>>()?;
                    extra.push(flag);
                    extra.push(parts.join(","));
                }
            }
            Value::Object(obj) => {
                for (k, item) in obj {
                    extra.push(flag.clone());
                    extra.push(format!("{k}={}", scalar(item)?));
                }
            }
            _ => {
                extra.push(flag);
                extra.push(scalar(&v)?);
            }
        }
    }
    argv.extend(extra);
    Ok(argv)
}
