//! Effective run settings: command-line flags over config-file values over
//! built-in defaults.
//!
//! The config file is plain text, one `key = value` per line, `#` starts a
//! comment. Keys are the long flag names (`max-iters`, `cv-restarts`, ...);
//! underscores are accepted in place of dashes.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::Value;

use crate::CliError;

const KNOWN_KEYS: &[&str] = &[
    "a",
    "alpha",
    "assign",
    "b",
    "bins",
    "cv-restarts",
    "data",
    "folds",
    "format",
    "iterations",
    "jobs",
    "k",
    "kmax",
    "kmin",
    "ks",
    "labels",
    "max-iters",
    "min-shared-features",
    "missing-as-category",
    "missingness",
    "oracle",
    "oracle-pairs",
    "out",
    "preset",
    "restarts",
    "seed",
    "spec",
    "threshold",
    "tol",
    "zscore",
];

struct Entry {
    value: String,
    line: usize,
}

pub struct Settings {
    file: BTreeMap<String, Entry>,
    path: Option<PathBuf>,
    effective: BTreeMap<String, Value>,
}

fn normalize(key: &str) -> String {
    key.trim().replace('_', "-")
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let mut file = BTreeMap::new();
        if let Some(path) = path {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            for (i, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let Some((key, value)) = line.split_once('=') else {
                    return Err(CliError::Input(format!(
                        "{}:{}: expected `key = value`",
                        path.display(),
                        i + 1
                    )));
                };
                let key = normalize(key);
                if !KNOWN_KEYS.contains(&key.as_str()) {
                    return Err(CliError::Input(format!(
                        "{}:{}: unknown key `{key}`",
                        path.display(),
                        i + 1
                    )));
                }
                file.insert(
                    key,
                    Entry {
                        value: value.trim().to_string(),
                        line: i + 1,
                    },
                );
            }
        }
        Ok(Self {
            file,
            path: path.map(Path::to_path_buf),
            effective: BTreeMap::new(),
        })
    }

    fn file_value<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        let Some(entry) = self.file.get(key) else {
            return Ok(None);
        };
        let path = self.path.as_deref().unwrap_or(Path::new("config"));
        entry.value.parse::<T>().map(Some).map_err(|e| {
            CliError::Usage(format!(
                "{}:{}: invalid value `{}` for `{key}`: {e}",
                path.display(),
                entry.line,
                entry.value
            ))
        })
    }

    /// Flag, else config value, else nothing. Not echoed into the manifest.
    pub fn raw<T: FromStr>(&self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.file_value(key),
        }
    }

    /// Flag, else config value, else nothing; echoed when present.
    pub fn optional<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T: FromStr + serde::Serialize,
        T::Err: Display,
    {
        let v = self.raw(key, flag)?;
        if let Some(v) = &v {
            self.record(key, v);
        }
        Ok(v)
    }

    /// Flag, else config value, else `default`; always echoed.
    pub fn value<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T: FromStr + serde::Serialize,
        T::Err: Display,
    {
        let v = self.raw(key, flag)?.unwrap_or(default);
        self.record(key, &v);
        Ok(v)
    }

    /// Like [`Settings::optional`] but the key must be set somewhere.
    pub fn required<T>(&mut self, key: &str, flag: Option<T>) -> Result<T, CliError>
    where
        T: FromStr + serde::Serialize,
        T::Err: Display,
    {
        self.optional(key, flag)?
            .ok_or_else(|| CliError::Usage(format!("--{key} is required (flag or config key)")))
    }

    /// Boolean switch: present flag wins, else `key = true|false`.
    pub fn switch(&mut self, key: &str, flag: bool) -> Result<bool, CliError> {
        let v = if flag { true } else { self.file_value(key)?.unwrap_or(false) };
        self.record(key, &v);
        Ok(v)
    }

    pub fn record<T: serde::Serialize>(&mut self, key: &str, v: &T) {
        self.effective
            .insert(key.to_string(), serde_json::to_value(v).expect("setting serializes"));
    }

    pub fn effective(&self) -> &BTreeMap<String, Value> {
        &self.effective
    }

    pub fn config_path(&self) -> Option<&Path> {
        self.path.as_deref()
    }
}
