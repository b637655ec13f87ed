//! Vector and matrix operands: inline `0.1,0.2,0.3` or `@path` to a JSON file.

use std::fs;

use anyhow::{bail, Context, Result};

fn read_json(arg: &str) -> Result<Option<serde_json::Value>> {
    match arg.strip_prefix('@') {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
            let value = serde_json::from_str(&text).with_context(|| format!("parsing {path}"))?;
            Ok(Some(value))
        }
        None => Ok(None),
    }
}

pub fn vector(arg: &str) -> Result<Vec<f64>> {
    if let Some(value) = read_json(arg)? {
        return serde_json::from_value(value).context("expected a JSON array of numbers");
    }
    let out: Result<Vec<f64>> = arg
        .split(',')
        .map(|s| {
            let s = s.trim();
            s.parse::<f64>()
                .with_context(|| format!("'{s}' is not a number"))
        })
        .collect();
    let out = out?;
    if out.is_empty() {
        bail!("empty vector");
    }
    Ok(out)
}

/// Square matrix: a JSON array of rows, or inline rows separated by `;`.
pub fn matrix(arg: &str) -> Result<Vec<Vec<f64>>> {
    if let Some(value) = read_json(arg)? {
        return serde_json::from_value(value).context("expected a JSON array of numeric rows");
    }
    arg.split(';').map(vector).collect()
}
