//! `key = value` configuration files. Blank lines and `#` comments are
//! ignored; keys use the long flag names without dashes (`prune-m = 3`).

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected key = value, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: duplicate key {key:?}")]
    Duplicate { line: usize, key: String },
    #[error("unknown key {key:?} (known: {known})")]
    UnknownKey { key: String, known: String },
    #[error("key {key:?}: cannot parse {value:?}")]
    Value { key: String, value: String },
    #[error("cannot read {path}: {msg}")]
    Io { path: String, msg: String },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax { line: i + 1, text: raw.to_string() })?;
            let key = k.trim().trim_start_matches("--").to_string();
            if key.is_empty() {
                return Err(ConfigError::Syntax { line: i + 1, text: raw.to_string() });
            }
            if values.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(ConfigError::Duplicate { line: i + 1, key });
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), msg: e.to_string() })?;
        Self::parse(&text)
    }

    /// Rejects keys outside `known`.
    pub fn check_keys(&self, known: &[&str]) -> Result<(), ConfigError> {
        match self.values.keys().find(|k| !known.contains(&k.as_str())) {
            Some(k) => Err(ConfigError::UnknownKey { key: k.clone(), known: known.join(", ") }),
            None => Ok(()),
        }
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        self.values
            .get(key)
            .map(|v| v.parse().map_err(|_| ConfigError::Value { key: key.to_string(), value: v.clone() }))
            .transpose()
    }

    /// Booleans accept true/false, yes/no, on/off and 1/0.
    pub fn get_bool(&self, key: &str) -> Result<Option<bool>, ConfigError> {
        self.values
            .get(key)
            .map(|v| match v.to_ascii_lowercase().as_str() {
                "true" | "yes" | "on" | "1" => Ok(true),
                "false" | "no" | "off" | "0" => Ok(false),
                _ => Err(ConfigError::Value { key: key.to_string(), value: v.clone() }),
            })
            .transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_types_values() {
        let c = ConfigFile::parse("# tracker\neps = 0.001\nprune-m=4  # fewer\nno-group = yes\n").unwrap();
        assert_eq!(c.get::<f64>("eps").unwrap(), Some(0.001));
        assert_eq!(c.get::<usize>("prune-m").unwrap(), Some(4));
        assert_eq!(c.get_bool("no-group").unwrap(), Some(true));
        assert_eq!(c.get::<f64>("zeta").unwrap(), None);
        assert!(c.get::<usize>("eps").is_err());
        assert!(c.check_keys(&["eps", "prune-m"]).is_err());
        assert!(ConfigFile::parse("eps 1").is_err());
        assert!(ConfigFile::parse("a=1\na=2").is_err());
    }
}
