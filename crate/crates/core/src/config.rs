//! Flat `key = value` experiment configuration. Keys use dotted section
//! prefixes (`schedule.T`, `world.means`, `edit.lambda`), `#` starts a
//! comment line, and vectors are comma-separated decimals in square
//! brackets, nesting once for lists of vectors: `[[3, 0], [-3, 0]]`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

fn missing(key: &str) -> Error {
    Error::Config(format!("missing key `{key}`"))
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let mut values = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "line {}: expected `key = value`, got `{line}`",
                    idx + 1
                ))
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", idx + 1)));
            }
            if values
                .insert(key.to_string(), value.trim().to_string())
                .is_some()
            {
                return Err(Error::Config(format!("duplicate key `{key}`")));
            }
        }
        Ok(Config { values })
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Config::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    fn typed<T: FromStr>(&self, key: &str, kind: &str) -> Result<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                Error::Config(format!("key `{key}`: expected {kind}, got `{raw}`"))
            }),
        }
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.typed::<f64>(key, "a number")?.unwrap_or(default))
    }

    pub fn require_f64(&self, key: &str) -> Result<f64> {
        self.typed::<f64>(key, "a number")?.ok_or_else(|| missing(key))
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        Ok(self
            .typed::<usize>(key, "a non-negative integer")?
            .unwrap_or(default))
    }

    pub fn require_usize(&self, key: &str) -> Result<usize> {
        self.typed::<usize>(key, "a non-negative integer")?
            .ok_or_else(|| missing(key))
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        Ok(self
            .typed::<u64>(key, "a non-negative integer")?
            .unwrap_or(default))
    }

    pub fn str_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.get(key).unwrap_or(default)
    }

    pub fn require_vector(&self, key: &str) -> Result<Vec<f64>> {
        let raw = self.get(key).ok_or_else(|| missing(key))?;
        parse_vector(raw).map_err(|e| Error::Config(format!("key `{key}`: {e}")))
    }

    pub fn require_vector_list(&self, key: &str) -> Result<Vec<Vec<f64>>> {
        let raw = self.get(key).ok_or_else(|| missing(key))?;
        parse_vector_list(raw).map_err(|e| Error::Config(format!("key `{key}`: {e}")))
    }

    pub fn f64_list_or(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some(raw) => {
                parse_scalar_list::<f64>(raw, "a number")
                    .map_err(|e| Error::Config(format!("key `{key}`: {e}")))
            }
        }
    }

    pub fn usize_list_or(&self, key: &str, default: &[usize]) -> Result<Vec<usize>> {
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some(raw) => parse_scalar_list::<usize>(raw, "a non-negative integer")
                .map_err(|e| Error::Config(format!("key `{key}`: {e}"))),
        }
    }
}

fn strip_brackets(text: &str) -> std::result::Result<&str, String> {
    let trimmed = text.trim();
    trimmed
        .strip_prefix('[')
        .and_then(|rest| rest.strip_suffix(']'))
        .ok_or_else(|| format!("expected a bracketed list, got `{trimmed}`"))
}

fn parse_scalar_list<T: FromStr>(
    text: &str,
    kind: &str,
) -> std::result::Result<Vec<T>, String> {
    let inner = strip_brackets(text)?;
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    inner
        .split(',')
        .map(|item| {
            let item = item.trim();
            item.parse::<T>()
                .map_err(|_| format!("expected {kind}, got `{item}`"))
        })
        .collect()
}

/// Parse `[1, 2.5, -3]` into its coordinates.
pub fn parse_vector(text: &str) -> Result<Vec<f64>> {
    parse_scalar_list::<f64>(text, "a number").map_err(Error::Config)
}

/// Parse `[[3, 0], [-3, 0]]` into a list of vectors.
pub fn parse_vector_list(text: &str) -> Result<Vec<Vec<f64>>> {
    let inner = strip_brackets(text).map_err(Error::Config)?;
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    let mut items = Vec::new();
    let mut depth = 0usize;
    let mut start = 0usize;
    for (i, c) in inner.char_indices() {
        match c {
            '[' => depth += 1,
            ']' => {
                depth = depth
                    .checked_sub(1)
                    .ok_or_else(|| Error::Config(format!("unbalanced brackets in `{text}`")))?;
            }
            ',' if depth == 0 => {
                items.push(&inner[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err(Error::Config(format!("unbalanced brackets in `{text}`")));
    }
    items.push(&inner[start..]);
    items.into_iter().map(parse_vector).collect()
}

/// Render coordinates back into the bracketed config form.
pub fn format_vector(v: &[f64]) -> String {
    let mut out = String::from("[");
    for (i, x) in v.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "{x}");
    }
    out.push(']');
    out
}
