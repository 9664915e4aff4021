//! Reproducible artifact writing: provenance headers, 10-significant-digit
//! numbers and refusal to overwrite without `--force`.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::{json, Map, Value};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Invocation details embedded in every artifact.
#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub version: &'static str,
    pub command: String,
    pub seed: Option<u64>,
}

impl Meta {
    pub fn new(seed: Option<u64>) -> Self {
        let args: Vec<String> = std::env::args().skip(1).collect();
        Self { version: VERSION, command: format!("evgate {}", args.join(" ")), seed }
    }

    fn csv_header(&self) -> String {
        let seed = self.seed.map_or_else(|| "none".to_string(), |s| s.to_string());
        format!("# evgate {} | command: {} | seed: {}\n", self.version, self.command, seed)
    }
}

/// Format with 10 significant digits, plain notation for moderate magnitudes.
pub fn fmt10(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{x:.9e}");
    let exp: i32 = sci.rsplit_once('e').and_then(|(_, e)| e.parse().ok()).unwrap_or(0);
    if (-5..10).contains(&exp) {
        let plain = format!("{:.*}", (9 - exp).max(0) as usize, x);
        if plain.contains('.') {
            plain.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            plain
        }
    } else {
        sci
    }
}

/// Round every float in a JSON tree to 10 significant digits.
pub fn round_json(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().unwrap_or(0.0);
            fmt10(x).parse::<f64>().ok().and_then(serde_json::Number::from_f64).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round_json).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_json(v))).collect::<Map<_, _>>()),
        other => other,
    }
}

/// `{"meta": ..., "data": ...}` with rounded numbers.
pub fn json_artifact(meta: &Meta, data: impl Serialize) -> Result<String> {
    json_artifact_exact(meta, round_json(serde_json::to_value(data)?))
}

/// Like [`json_artifact`] but keeping full precision, for geometry that is read back
/// (rounded half-spaces would misroute atoms lying exactly on a cut).
pub fn json_artifact_exact(meta: &Meta, data: impl Serialize) -> Result<String> {
    let data = serde_json::to_value(data)?;
    let mut s = serde_json::to_string_pretty(&json!({ "meta": meta, "data": data }))?;
    s.push('\n');
    Ok(s)
}

/// CSV text with the provenance comment line first.
pub fn csv_artifact(meta: &Meta, header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut s = meta.csv_header();
    s.push_str(header);
    s.push('\n');
    for r in rows {
        s.push_str(&r);
        s.push('\n');
    }
    s
}

/// Unwrap an artifact written by this tool, or pass a bare document through.
pub fn payload(v: Value) -> Value {
    match v {
        Value::Object(mut o) if o.contains_key("meta") && o.contains_key("data") => o.remove("data").unwrap_or(Value::Null),
        other => other,
    }
}

/// Refuse to clobber existing files unless forced.
pub fn check_writable(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        bail!(InputError(format!("{} exists; pass --force to overwrite", path.display())));
    }
    Ok(())
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    let mut f = fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    f.write_all(contents.as_bytes())?;
    Ok(())
}

/// An error in the user's input (exit code 2).
#[derive(Debug)]
pub struct InputError(pub String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}
