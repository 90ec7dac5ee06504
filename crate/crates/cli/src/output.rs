//! Rendering of reports as JSON or CSV.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use clap::ValueEnum;
use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Fields kept at full precision because they are re-ingested as matrices.
const EXACT_KEYS: [&str; 2] = ["measurements", "entries"];

/// Rounds `x` to 7 significant digits.
pub fn round7(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.6e}").parse().unwrap_or(x)
}

fn round_tree(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(r) = n.as_f64().map(round7).and_then(serde_json::Number::from_f64) {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_tree),
        Value::Object(map) => {
            for (k, item) in map.iter_mut() {
                if !EXACT_KEYS.contains(&k.as_str()) {
                    round_tree(item);
                }
            }
        }
        _ => {}
    }
}

/// Serializes with every number outside the exact fields rounded.
pub fn to_value<T: Serialize>(x: &T) -> Result<Value> {
    let mut v = serde_json::to_value(x)?;
    round_tree(&mut v);
    Ok(v)
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => "-".into(),
        Value::String(s) if s.contains(',') || s.contains('"') => format!("\"{}\"", s.replace('"', "\"\"")),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(map) => {
            for (k, item) in map {
                if EXACT_KEYS.contains(&k.as_str()) {
                    continue;
                }
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, item, out);
            }
        }
        Value::Array(items) if items.iter().any(|x| x.is_object() || x.is_array()) => {
            for (i, item) in items.iter().enumerate() {
                flatten(&format!("{prefix}.{i}"), item, out);
            }
        }
        Value::Array(items) => {
            let joined: Vec<String> = items.iter().map(cell).collect();
            out.push((prefix.to_string(), cell(&Value::String(joined.join(" ")))));
        }
        other => out.push((prefix.to_string(), cell(other))),
    }
}

/// CSV rendering: tables (objects with `columns` and `rows`) become one line
/// per row; anything else becomes `key,value` lines with dotted keys.
pub fn to_csv(v: &Value) -> String {
    let mut s = String::new();
    if let (Some(Value::Array(cols)), Some(Value::Array(rows))) = (v.get("columns"), v.get("rows")) {
        s.push_str(&cols.iter().map(cell).collect::<Vec<_>>().join(","));
        s.push('\n');
        for row in rows {
            if let Value::Array(cells) = row {
                s.push_str(&cells.iter().map(cell).collect::<Vec<_>>().join(","));
                s.push('\n');
            }
        }
        return s;
    }
    let mut pairs = Vec::new();
    flatten("", v, &mut pairs);
    s.push_str("key,value\n");
    for (k, val) in pairs {
        s.push_str(&format!("{k},{val}\n"));
    }
    s
}

pub fn emit(v: &Value, format: Format, out: Option<&Path>) -> Result<()> {
    let text = match format {
        Format::Json => serde_json::to_string_pretty(v)? + "\n",
        Format::Csv => to_csv(v),
    };
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn rounding() {
        assert_eq!(round7(0.70710678118), 0.7071068);
        assert_eq!(round7(2.0), 2.0);
        assert_eq!(round7(-1.234567891e-5), -1.234568e-5);
        let v = to_value(&json!({"a": 0.123456789, "measurements": {"x": 0.123456789}})).unwrap();
        assert_eq!(v["a"], json!(0.1234568));
        assert_eq!(v["measurements"]["x"], json!(0.123456789));
    }

    #[test]
    fn csv_layouts() {
        let t = json!({"columns": ["d", "p"], "rows": [[2, 0.5], [3, null]]});
        assert_eq!(to_csv(&t), "d,p\n2,0.5\n3,-\n");
        let r = json!({"x": {"y": 1.5}, "v": [1, 2], "s": "a,b"});
        let csv = to_csv(&r);
        assert!(csv.contains("x.y,1.5\n") && csv.contains("v,1 2\n") && csv.contains("s,\"a,b\"\n"));
    }
}
