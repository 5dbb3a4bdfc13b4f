//! Loading a JSON run configuration with `--set` overrides applied.

use std::fs;
use std::path::Path;

use serde_json::Value;
use spoc_core::simulate::SimConfig;
use spoc_core::{Result, SpocError};

fn kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

/// Applies `a.b.c=VALUE` to a JSON document. `VALUE` is parsed as JSON when
/// it can be and taken as a string otherwise; replacing an existing value
/// must keep its JSON type (null may become anything).
pub fn apply_override(doc: &mut Value, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| SpocError::Config(format!("--set `{spec}`: expected KEY=VALUE")))?;
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(SpocError::Config(format!("--set `{key}`: empty path segment")));
    }
    let (last, parents) = parts.split_last().expect("split yields at least one part");
    let mut node = doc;
    for p in parents {
        node = match node {
            Value::Object(m) => m
                .entry(p.to_string())
                .or_insert_with(|| Value::Object(Default::default())),
            Value::Array(a) => {
                let i: usize = p
                    .parse()
                    .map_err(|_| SpocError::Config(format!("--set `{key}`: `{p}` is not an index")))?;
                let len = a.len();
                a.get_mut(i).ok_or_else(|| {
                    SpocError::Config(format!("--set `{key}`: index {i} out of range ({len})"))
                })?
            }
            other => {
                return Err(SpocError::Config(format!(
                    "--set `{key}`: `{p}` is inside a {}",
                    kind(other)
                )))
            }
        };
    }
    let slot = match node {
        Value::Object(m) => m.get_mut(*last),
        Value::Array(a) => last.parse::<usize>().ok().and_then(|i| a.get_mut(i)),
        other => {
            return Err(SpocError::Config(format!(
                "--set `{key}`: parent is a {}",
                kind(other)
            )))
        }
    };
    let value = match slot.as_deref() {
        Some(Value::String(_)) => Value::String(raw.to_string()),
        _ => serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string())),
    };
    match slot {
        Some(old) => {
            if !old.is_null() && kind(old) != kind(&value) {
                return Err(SpocError::Config(format!(
                    "--set `{key}`: expected a {}, got a {} (`{raw}`)",
                    kind(old),
                    kind(&value)
                )));
            }
            *old = value;
        }
        None => match node {
            Value::Object(m) => {
                m.insert(last.to_string(), value);
            }
            _ => return Err(SpocError::Config(format!("--set `{key}`: no such element"))),
        },
    }
    Ok(())
}

/// Reads `path` (or an empty object when absent), applies the overrides and
/// validates the result. Type and unknown-key errors name the key.
pub fn load_value(path: Option<&Path>, overrides: &[String]) -> Result<Value> {
    let mut doc = match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| SpocError::Config(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| SpocError::Config(format!("{}: {e}", p.display())))?
        }
        None => Value::Object(Default::default()),
    };
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    Ok(doc)
}

pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<SimConfig> {
    let doc = load_value(path, overrides)?;
    let cfg: SimConfig = serde_json::from_value(doc).map_err(|e| {
        SpocError::Config(match path {
            Some(p) => format!("{}: {e}", p.display()),
            None => e.to_string(),
        })
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// `"1e3,1e4,100"` as particle counts.
pub fn parse_counts(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|t| {
            let t = t.trim();
            let v: f64 = t
                .parse()
                .map_err(|_| SpocError::Config(format!("`{t}` is not a number")))?;
            if !(v >= 1.0) || v.fract() != 0.0 || v > 1e15 {
                return Err(SpocError::Config(format!("`{t}` is not a positive integer")));
            }
            Ok(v as usize)
        })
        .collect()
}

/// `"lo,hi"`.
pub fn parse_range(s: &str) -> Result<(f64, f64)> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| SpocError::Config(format!("bad range `{s}`")))?;
    match v[..] {
        [a, b] if b > a => Ok((a, b)),
        _ => Err(SpocError::Config(format!("bad range `{s}`: want LO,HI with LO < HI"))),
    }
}
