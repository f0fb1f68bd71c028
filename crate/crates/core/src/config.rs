//! Flat `key = value` configuration files.
//!
//! One setting per line; blank lines and lines starting with `#` or `;` are
//! ignored, as are `[section]` headers. Keys are case-sensitive and may use
//! `-` or `_` interchangeably. Command-line flags override file keys.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`: {message}")]
    Value { key: String, value: String, message: String },
    #[error("missing required setting `{0}`")]
    Missing(String),
}

fn normalize_key(key: &str) -> String {
    key.trim().replace('-', "_")
}

/// Raw settings in file order, later keys winning.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                message: "expected `key = value`".into(),
            })?;
            let key = normalize_key(k);
            if key.is_empty() {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    message: "empty key".into(),
                });
            }
            entries.insert(key, v.trim().to_owned());
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(normalize_key(key), value.to_string());
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

/// Typed lookups over a [`ConfigFile`] that record every resolved value, so
/// the effective configuration (defaults included) can be written back out.
#[derive(Debug)]
pub struct Settings {
    file: ConfigFile,
    allowed: &'static [&'static str],
    resolved: BTreeMap<String, String>,
}

impl Settings {
    /// Fails on any key outside `allowed`.
    pub fn new(file: ConfigFile, allowed: &'static [&'static str]) -> Result<Self, ConfigError> {
        if let Some(k) = file.keys().find(|k| !allowed.contains(k)) {
            return Err(ConfigError::UnknownKey(k.to_owned()));
        }
        Ok(Self {
            file,
            allowed,
            resolved: BTreeMap::new(),
        })
    }

    fn parse<T: FromStr>(&self, key: &str, value: &str) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        value.parse().map_err(|e: T::Err| ConfigError::Value {
            key: key.to_owned(),
            value: value.to_owned(),
            message: e.to_string(),
        })
    }

    pub fn get_opt<T: FromStr + ToString>(&mut self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        debug_assert!(self.allowed.contains(&key), "{key} not declared");
        match self.file.get(key) {
            Some(v) => {
                let parsed: T = self.parse(key, v)?;
                self.resolved.insert(key.to_owned(), parsed.to_string());
                Ok(Some(parsed))
            }
            None => Ok(None),
        }
    }

    pub fn get_or<T: FromStr + ToString>(&mut self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        match self.get_opt(key)? {
            Some(v) => Ok(v),
            None => {
                self.resolved.insert(key.to_owned(), default.to_string());
                Ok(default)
            }
        }
    }

    pub fn require<T: FromStr + ToString>(&mut self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.get_opt(key)?.ok_or_else(|| ConfigError::Missing(key.to_owned()))
    }

    /// Resolved settings as a config file; parsing it back yields the same
    /// values.
    pub fn effective(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.resolved {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}
