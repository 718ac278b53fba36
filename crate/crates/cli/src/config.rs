//! Flat `key = value` configuration files.
//!
//! One setting per line, `#` starts a comment, keys are the long flag names
//! without dashes (`lambda-bound = 2`). Command-line flags override file
//! values, which override built-in defaults.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use minsurf::{Error, Result};

#[derive(Debug, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => Self::parse(&std::fs::read_to_string(p)?),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidInput(format!("config line {}: expected key = value", ln + 1)))?;
            let key = k.trim().to_string();
            if values.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(Error::InvalidInput(format!("config key '{key}' given twice")));
            }
        }
        Ok(Self { values })
    }

    /// Rejects keys the current subcommand does not understand.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        match self.values.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(Error::InvalidInput(format!("unknown config key '{k}'"))),
            None => Ok(()),
        }
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.values
            .get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| Error::InvalidInput(format!("config key '{key}': {e}")))
            })
            .transpose()
    }

    /// Flag, then file, then default.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(match flag {
            Some(v) => v,
            None => self.get(key)?.unwrap_or(default),
        })
    }

    pub fn pick_opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        Ok(match flag {
            Some(v) => Some(v),
            None => self.get(key)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_and_comments() {
        let c = ConfigFile::parse("# scan settings\nsamples = 10 # inline\nK=4.5\n\n").unwrap();
        assert_eq!(c.pick(None, "samples", 1u64).unwrap(), 10);
        assert_eq!(c.pick(Some(3u64), "samples", 1).unwrap(), 3);
        assert_eq!(c.pick(None, "seed", 7u64).unwrap(), 7);
        assert_eq!(c.pick(None, "K", 2.0f64).unwrap(), 4.5);
        assert!(c.check_keys(&["samples"]).is_err());
        assert!(c.check_keys(&["samples", "K"]).is_ok());
    }

    #[test]
    fn malformed_files_are_rejected() {
        assert!(ConfigFile::parse("samples 10").is_err());
        assert!(ConfigFile::parse("a = 1\na = 2").is_err());
        let c = ConfigFile::parse("samples = ten").unwrap();
        assert!(c.pick(None, "samples", 1u64).is_err());
    }
}
