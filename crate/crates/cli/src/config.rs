//! Optional `key=value` config files.
//!
//! Precedence: explicit command-line flags override config-file entries,
//! which override built-in defaults. Keys use the long flag names.

use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, Context};

use crate::UsageError;

#[derive(Debug, Default)]
pub struct ConfigFile {
    values: HashMap<String, String>,
}

impl ConfigFile {
    /// Loads the file if a path was given; an absent path is an empty config.
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let mut values = HashMap::new();
        for (number, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                anyhow!(
                    "{}:{}: expected key=value, got {line:?}",
                    path.display(),
                    number + 1
                )
            })?;
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self { values })
    }

    /// Parses the config entry for `key`, if present.
    pub fn get<T>(&self, key: &str) -> anyhow::Result<Option<T>>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|e| anyhow::Error::new(UsageError(format!("config key {key}={raw}: {e}")))),
        }
    }
}

/// Flag-over-config-over-default resolution.
pub fn resolve<T>(flag: Option<T>, config: anyhow::Result<Option<T>>, default: T) -> anyhow::Result<T> {
    Ok(flag.or(config?).unwrap_or(default))
}

/// As [`resolve`], but without a default: the value must come from somewhere.
pub fn resolve_required<T>(
    flag: Option<T>,
    config: anyhow::Result<Option<T>>,
    name: &str,
) -> anyhow::Result<T> {
    flag.or(config?).ok_or_else(|| {
        anyhow::Error::new(UsageError(format!(
            "missing required option --{name} (flag or config file)"
        )))
    })
}
