//! Fixed-precision JSON and CSV writers.
//!
//! Floats are printed with 17 significant digits so that identical inputs
//! give byte-identical files. Non-finite values are written as the strings
//! `inf`, `-inf` and `nan`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

/// JSON value for a float; non-finite values become strings.
pub fn num(v: f64) -> Value {
    match serde_json::Number::from_f64(v) {
        Some(n) => Value::Number(n),
        None => Value::String(fmt_f64(v)),
    }
}

pub fn nums(v: impl IntoIterator<Item = f64>) -> Value {
    Value::Array(v.into_iter().map(num).collect())
}

pub fn opt_num(v: Option<f64>) -> Value {
    v.map(num).unwrap_or(Value::Null)
}

fn render_into(out: &mut String, v: &Value, indent: usize) {
    let pad = "  ".repeat(indent + 1);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                let _ = write!(out, "{i}");
            } else if let Some(u) = n.as_u64() {
                let _ = write!(out, "{u}");
            } else {
                out.push_str(&fmt_f64(n.as_f64().unwrap_or(f64::NAN)));
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            if items.iter().all(|x| !x.is_array() && !x.is_object()) {
                out.push('[');
                for (k, item) in items.iter().enumerate() {
                    if k > 0 {
                        out.push_str(", ");
                    }
                    render_into(out, item, indent);
                }
                out.push(']');
                return;
            }
            out.push_str("[\n");
            for (k, item) in items.iter().enumerate() {
                out.push_str(&pad);
                render_into(out, item, indent + 1);
                out.push_str(if k + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&"  ".repeat(indent));
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push_str("{\n");
            for (k, (key, item)) in map.iter().enumerate() {
                out.push_str(&pad);
                out.push_str(&Value::String(key.clone()).to_string());
                out.push_str(": ");
                render_into(out, item, indent + 1);
                out.push_str(if k + 1 < map.len() { ",\n" } else { "\n" });
            }
            out.push_str(&"  ".repeat(indent));
            out.push('}');
        }
    }
}

/// Pretty-prints `v`, with floats in fixed 17-digit scientific notation.
pub fn render(v: &Value) -> String {
    let mut s = String::new();
    render_into(&mut s, v, 0);
    s.push('\n');
    s
}

/// Identity of a run, embedded in every artifact.
#[derive(Debug, Clone)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(config_bytes: &[u8], seed: u64) -> Self {
        Provenance {
            config_hash: hex::encode(Sha256::digest(config_bytes)),
            seed,
        }
    }

    /// `{config_hash, seed, ...body}`.
    pub fn wrap(&self, body: Map<String, Value>) -> Value {
        let mut m = Map::new();
        m.insert("config_hash".into(), Value::String(self.config_hash.clone()));
        m.insert("seed".into(), Value::from(self.seed));
        m.extend(body);
        Value::Object(m)
    }

    pub fn csv_header(&self) -> String {
        format!("# config_hash={}, seed={}\n", self.config_hash, self.seed)
    }
}

pub struct OutputDir {
    dir: PathBuf,
    prov: Provenance,
}

impl OutputDir {
    pub fn new(dir: &Path, prov: Provenance) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(OutputDir {
            dir: dir.to_path_buf(),
            prov,
        })
    }

    pub fn provenance(&self) -> &Provenance {
        &self.prov
    }

    pub fn write_json(&self, name: &str, body: Map<String, Value>) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, render(&self.prov.wrap(body))).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    /// Writes a CSV table; every cell is a float.
    pub fn write_csv(&self, name: &str, columns: &[&str], rows: &[Vec<f64>]) -> Result<PathBuf> {
        let mut s = self.prov.csv_header();
        s.push_str(&columns.join(","));
        s.push('\n');
        for row in rows {
            let cells: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        let path = self.dir.join(name);
        fs::write(&path, s).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn floats_have_seventeen_digits() {
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
        let parsed: f64 = fmt_f64(std::f64::consts::PI).parse().unwrap();
        assert_eq!(parsed, std::f64::consts::PI);
    }

    #[test]
    fn render_is_valid_json() {
        let v = json!({"a": 1.5, "b": [1, 2], "c": {"d": "x"}, "e": [{"f": 0.25}], "g": num(f64::INFINITY)});
        let text = render(&v);
        let back: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(back["a"].as_f64(), Some(1.5));
        assert_eq!(back["g"], "inf");
        assert_eq!(back["e"][0]["f"].as_f64(), Some(0.25));
    }
}
