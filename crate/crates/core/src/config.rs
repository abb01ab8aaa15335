//! `key = value` configuration files.
//!
//! One setting per line; `#` starts a comment; keys are matched with `-`
//! and `_` treated alike; list values are comma separated.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

fn normalize(key: &str) -> String {
    key.trim().replace('-', "_").to_ascii_lowercase()
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let key = normalize(k);
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
            }
            if values.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key '{key}'", lineno + 1)));
            }
        }
        Ok(ConfigFile { values })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.as_ref().display())))?;
        Self::parse(&text)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(&normalize(key)).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("invalid value '{v}' for '{key}'"))),
        }
    }

    pub fn list(&self, key: &str) -> Option<Vec<String>> {
        self.raw(key).map(split_list)
    }

    /// Keys not in `known`, for reporting typos.
    pub fn unknown_keys(&self, known: &[&str]) -> Vec<String> {
        let known: Vec<String> = known.iter().map(|k| normalize(k)).collect();
        self.values.keys().filter(|k| !known.contains(k)).cloned().collect()
    }
}

/// Comma-separated list with blanks removed.
pub fn split_list(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|p| !p.is_empty()).map(String::from).collect()
}

/// First available value: flag, then file, then default.
pub fn layered<T: FromStr>(flag: Option<T>, file: &ConfigFile, key: &str, default: T) -> Result<T> {
    match flag {
        Some(v) => Ok(v),
        None => Ok(file.get(key)?.unwrap_or(default)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_precedence() {
        let c = ConfigFile::parse("# comment\nfolds = 3\nn-list = 100, 200\nalpha=0.1 # trailing\n").unwrap();
        assert_eq!(c.get::<usize>("folds").unwrap(), Some(3));
        assert_eq!(c.list("n_list").unwrap(), vec!["100", "200"]);
        assert_eq!(layered(Some(7usize), &c, "folds", 5).unwrap(), 7);
        assert_eq!(layered(None, &c, "folds", 5).unwrap(), 3);
        assert_eq!(layered(None, &c, "paths", 10usize).unwrap(), 10);
        assert!(c.get::<usize>("alpha").is_err());
    }

    #[test]
    fn rejects_malformed() {
        assert!(ConfigFile::parse("folds 3").is_err());
        assert!(ConfigFile::parse("a=1\na=2").is_err());
        let c = ConfigFile::parse("fodls=3").unwrap();
        assert_eq!(c.unknown_keys(&["folds"]), vec!["fodls"]);
    }
}
