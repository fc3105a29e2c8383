//! `key = value` experiment files with `#` comments and dotted keys.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: `{key}`: {msg}")]
    Value { line: usize, key: String, msg: String },
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("line {line}: unknown key `{key}`")]
    Unknown { line: usize, key: String },
}

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

/// Parsed configuration. Lookups record which keys were consumed so that
/// leftovers can be reported as unknown.
#[derive(Debug)]
pub struct Config {
    entries: BTreeMap<String, Entry>,
    used: RefCell<BTreeSet<String>>,
}

fn valid_key(key: &str) -> bool {
    !key.is_empty()
        && key.split('.').all(|part| {
            !part.is_empty() && part.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        })
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Syntax { line, msg: format!("expected `key = value`, found `{content}`") });
            };
            let key = key.trim();
            let value = value.trim();
            if !valid_key(key) {
                return Err(ConfigError::Syntax { line, msg: format!("invalid key `{key}`") });
            }
            if value.is_empty() {
                return Err(ConfigError::Syntax { line, msg: format!("empty value for `{key}`") });
            }
            if let Some(prev) = entries.insert(key.to_string(), Entry { value: value.to_string(), line }) {
                return Err(ConfigError::Syntax { line, msg: format!("`{key}` already set on line {}", prev.line) });
            }
        }
        Ok(Self { entries, used: RefCell::default() })
    }

    fn entry(&self, key: &str) -> Option<&Entry> {
        let e = self.entries.get(key)?;
        self.used.borrow_mut().insert(key.to_string());
        Some(e)
    }

    pub fn line(&self, key: &str) -> usize {
        self.entries.get(key).map_or(0, |e| e.line)
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.entry(key).map(|e| e.value.as_str())
    }

    pub fn require_str(&self, key: &str) -> Result<&str, ConfigError> {
        self.str(key).ok_or_else(|| ConfigError::Missing(key.into()))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.entry(key)
            .map(|e| {
                e.value.parse::<T>().map_err(|err| ConfigError::Value {
                    line: e.line,
                    key: key.into(),
                    msg: format!("cannot parse `{}`: {err}", e.value),
                })
            })
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.get(key)?.ok_or_else(|| ConfigError::Missing(key.into()))
    }

    /// Comma- or whitespace-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        let Some(e) = self.entry(key) else {
            return Ok(None);
        };
        e.value
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<T>().map_err(|err| ConfigError::Value {
                    line: e.line,
                    key: key.into(),
                    msg: format!("cannot parse `{t}`: {err}"),
                })
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    /// An error tied to the line of `key`.
    pub fn invalid(&self, key: &str, msg: impl Into<String>) -> ConfigError {
        ConfigError::Value { line: self.line(key), key: key.into(), msg: msg.into() }
    }

    /// Fails on the first key no lookup asked for.
    pub fn reject_unused(&self) -> Result<(), ConfigError> {
        let used = self.used.borrow();
        match self.entries.iter().filter(|(k, _)| !used.contains(*k)).min_by_key(|(_, e)| e.line) {
            Some((key, e)) => Err(ConfigError::Unknown { line: e.line, key: key.clone() }),
            None => Ok(()),
        }
    }

    /// Normalised `key = value` lines in key order.
    pub fn echo(&self) -> String {
        self.entries.iter().map(|(k, e)| format!("{k} = {}\n", e.value)).collect()
    }
}
