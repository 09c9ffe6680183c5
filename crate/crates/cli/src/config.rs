//! `key = value` configuration files and their merge with flags.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{io_err, CliError};

pub const RESOLVED_CONFIG_FILE: &str = "config.resolved";

/// Parses `key = value` lines. Blank lines and `#` comments are skipped;
/// keys are normalised so `g_min` and `g-min` are the same key.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`, got `{}`", i + 1, raw.trim())))?;
        let key = normalize_key(k.trim());
        if key.is_empty() {
            return Err(CliError::Config(format!("line {}: empty key", i + 1)));
        }
        if out.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(CliError::Config(format!("line {}: duplicate key `{key}`", i + 1)));
        }
    }
    Ok(out)
}

pub fn load_config(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

fn normalize_key(k: &str) -> String {
    k.replace('_', "-")
}

/// Resolved settings of one command: defaults, then the config file, then flags.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    values: BTreeMap<String, String>,
}

impl Resolved {
    /// `defaults` lists every key the command knows. An empty default means
    /// "unset".
    pub fn new(
        defaults: &[(&str, &str)],
        file: Option<&BTreeMap<String, String>>,
        flags: &[(&str, Option<String>)],
    ) -> Result<Self, CliError> {
        let mut values: BTreeMap<String, String> = defaults.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        if let Some(file) = file {
            for (k, v) in file {
                match values.get_mut(k) {
                    Some(slot) => *slot = v.clone(),
                    None => {
                        let known: Vec<&str> = defaults.iter().map(|(k, _)| *k).collect();
                        return Err(CliError::Config(format!("unknown config key `{k}` (known: {})", known.join(", "))));
                    }
                }
            }
        }
        for (k, v) in flags {
            if let Some(v) = v {
                let slot = values
                    .get_mut(*k)
                    .unwrap_or_else(|| panic!("flag `{k}` missing from the defaults table"));
                *slot = v.clone();
            }
        }
        Ok(Resolved { values })
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("unknown key `{key}`"))
    }

    pub fn is_set(&self, key: &str) -> bool {
        !self.raw(key).is_empty()
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        let raw = self.raw(key);
        raw.parse().map_err(|e| CliError::Config(format!("{key} = `{raw}`: {e}")))
    }

    pub fn opt<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        if self.is_set(key) {
            self.get(key).map(Some)
        } else {
            Ok(None)
        }
    }

    /// Comma- or whitespace-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, CliError>
    where
        T::Err: Display,
    {
        self.raw(key)
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|e| CliError::Config(format!("{key}: `{s}`: {e}"))))
            .collect()
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(key.to_string(), value.into());
    }

    /// Config-file text that reproduces this resolution.
    pub fn to_config_string(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn write_to(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join(RESOLVED_CONFIG_FILE);
        std::fs::write(&path, self.to_config_string()).map_err(io_err(&path))
    }
}
