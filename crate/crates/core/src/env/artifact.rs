//! Plain-text `key = value` artifacts.
//!
//! One entry per line, keys are unique, `#` starts a comment line. Floats are
//! written with Rust's shortest round-trip formatting so a parsed artifact
//! reproduces the original values bit-for-bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

pub fn write(entries: &[(String, String)]) -> String {
    let mut out = String::new();
    for (k, v) in entries {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}

pub fn parse(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once(" = ")
            .ok_or_else(|| Error::Artifact(format!("line {}: expected `key = value`", lineno + 1)))?;
        if map.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
            return Err(Error::Artifact(format!("duplicate key {k}")));
        }
    }
    Ok(map)
}

pub(crate) fn get<'a>(map: &'a BTreeMap<String, String>, key: &str) -> Result<&'a str> {
    map.get(key).map(String::as_str).ok_or_else(|| Error::Artifact(format!("missing key {key}")))
}

pub(crate) fn get_parsed<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T> {
    get(map, key)?.parse().map_err(|_| Error::Artifact(format!("bad value for {key}")))
}
