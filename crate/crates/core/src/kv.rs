//! Flat `key=value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys and values are
//! trimmed. Later assignments override earlier ones.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

/// A configuration section that can be read from and echoed to `key=value`
/// pairs.
pub trait KeyValue {
    /// Applies one assignment. Returns `Ok(false)` for keys this section does
    /// not own, so several sections can share one file.
    fn set(&mut self, key: &str, value: &str) -> Result<bool>;

    /// Every field as a `(key, value)` pair, in a stable order.
    fn entries(&self) -> Vec<(String, String)>;

    fn to_kv_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }
}

/// Parses `key=value` lines, keeping the last assignment for each key.
pub fn parse_kv(text: &str, origin: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (number, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(origin, number as u64 + 1, format!("expected key=value, got {line:?}")))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::parse(origin, number as u64 + 1, "empty key"));
        }
        out.insert(key.to_owned(), value.trim().to_owned());
    }
    Ok(out)
}

pub(crate) fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(format!("{key}: cannot parse {value:?}")))
}

pub(crate) fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::config(format!("{key}: expected a boolean, got {value:?}"))),
    }
}

pub(crate) fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse_value(key, v.trim())).collect()
}

pub(crate) fn join_list<T: ToString>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}
