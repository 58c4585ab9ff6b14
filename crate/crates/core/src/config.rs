//! Plain-text `key = value` run configuration and run summaries.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

/// Parsed `key = value` lines. `#` starts a comment; blank lines are ignored.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KeyValueConfig {
    entries: BTreeMap<String, String>,
}

impl KeyValueConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("expected `key = value`, got {line:?}"),
                });
            };
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "empty key".into(),
                });
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Config(format!("key {k:?} set twice")));
            }
        }
        Ok(KeyValueConfig { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&crate::error::read_text(path)?)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.entries
            .get(key)
            .map(|v| {
                v.parse()
                    .map_err(|e| Error::Config(format!("bad value {v:?} for {key}: {e}")))
            })
            .transpose()
    }

    /// Rejects keys outside `allowed`, which usually means a typo.
    pub fn check_known(&self, allowed: &[&str]) -> Result<()> {
        match self.entries.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(Error::Config(format!("unknown config key {k:?}"))),
            None => Ok(()),
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

/// Flag value if given, else the config value, else the default.
pub fn layered<T: FromStr>(flag: Option<T>, cfg: Option<&KeyValueConfig>, key: &str, default: T) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    if let Some(v) = flag {
        return Ok(v);
    }
    match cfg {
        Some(c) => Ok(c.get(key)?.unwrap_or(default)),
        None => Ok(default),
    }
}

/// Written next to every command's outputs so a run can be replayed.
#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub command: String,
    pub version: &'static str,
    pub seed: Option<u64>,
    pub parameters: serde_json::Value,
    pub outputs: Vec<String>,
    pub metrics: serde_json::Value,
}

impl RunSummary {
    pub fn new(command: &str, seed: Option<u64>, parameters: serde_json::Value) -> Self {
        RunSummary {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            seed,
            parameters,
            outputs: Vec::new(),
            metrics: serde_json::Value::Null,
        }
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}
