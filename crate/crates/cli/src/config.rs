//! `key = value` configuration files and precedence resolution
//! (flags > file > built-in defaults).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use serde_json::Value;

use crate::failure::Failure;

/// Parsed configuration file; keys are normalized to use '-'.
#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    entries: BTreeMap<String, (String, usize)>,
    source: String,
}

fn normalize(key: &str) -> String {
    key.trim().replace('_', "-").to_ascii_lowercase()
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, source: &str) -> Result<Self, Failure> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Failure::validation(format!("{source}:{}: expected 'key = value'", i + 1)))?;
            let key = normalize(k);
            if key.is_empty() {
                return Err(Failure::validation(format!("{source}:{}: empty key", i + 1)));
            }
            if entries.insert(key.clone(), (v.trim().to_string(), i + 1)).is_some() {
                return Err(Failure::validation(format!("{source}:{}: key '{key}' set twice", i + 1)));
            }
        }
        Ok(ConfigFile { entries, source: source.into() })
    }
}

/// Resolves settings and records every resolved value for echoing.
pub struct Resolver {
    file: ConfigFile,
    used: BTreeSet<String>,
    resolved: BTreeMap<String, Value>,
}

impl Resolver {
    pub fn new(file: Option<ConfigFile>) -> Self {
        Resolver { file: file.unwrap_or_default(), used: BTreeSet::new(), resolved: BTreeMap::new() }
    }

    fn file_value<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, Failure>
    where
        T::Err: Display,
    {
        let key = normalize(key);
        self.used.insert(key.clone());
        match self.file.entries.get(&key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| Failure::validation(format!("{}:{line}: bad value '{v}' for '{key}': {e}", self.file.source))),
        }
    }

    /// Flag value, else file value, else `default`.
    pub fn get<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, Failure>
    where
        T: FromStr + serde::Serialize,
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => {
                self.used.insert(normalize(key));
                v
            }
            None => self.file_value(key)?.unwrap_or(default),
        };
        self.record(key, &v);
        Ok(v)
    }

    /// Flag value, else file value, else `None`.
    pub fn get_opt<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, Failure>
    where
        T: FromStr + serde::Serialize,
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => {
                self.used.insert(normalize(key));
                Some(v)
            }
            None => self.file_value(key)?,
        };
        self.record(key, &v);
        Ok(v)
    }

    /// Boolean switch: set by the flag, or `true`/`false` in the file.
    pub fn switch(&mut self, key: &str, flag: bool) -> Result<bool, Failure> {
        let v = if flag { true } else { self.file_value::<bool>(key)?.unwrap_or(false) };
        self.record(key, &v);
        Ok(v)
    }

    fn record<T: serde::Serialize>(&mut self, key: &str, v: &T) {
        self.resolved.insert(normalize(key), serde_json::to_value(v).unwrap_or(Value::Null));
    }

    /// Adds a derived value (e.g. an automatically tuned grid) to the echo.
    pub fn note<T: serde::Serialize>(&mut self, key: &str, v: &T) {
        self.record(key, v);
    }

    /// Fails on file keys the command never asked for.
    pub fn finish(self) -> Result<BTreeMap<String, Value>, Failure> {
        let unknown: Vec<String> = self
            .file
            .entries
            .iter()
            .filter(|(k, _)| !self.used.contains(*k))
            .map(|(k, (_, line))| format!("'{k}' (line {line})"))
            .collect();
        if !unknown.is_empty() {
            return Err(Failure::validation(format!("{}: unknown keys for this command: {}", self.file.source, unknown.join(", "))));
        }
        Ok(self.resolved)
    }

    pub fn resolved(&self) -> &BTreeMap<String, Value> {
        &self.resolved
    }
}

/// Comma-separated list parsed element-wise.
pub fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>, Failure>
where
    T::Err: Display,
{
    s.split(',')
        .map(|t| t.trim())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<T>().map_err(|e| Failure::validation(format!("bad list element '{t}': {e}"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_is_flag_then_file_then_default() {
        let file = ConfigFile::parse("nu = 1.5\n# comment\nseed=9 # trailing\n", "run.cfg").unwrap();
        let mut r = Resolver::new(Some(file));
        assert_eq!(r.get("nu", Some(2.5), 0.5).unwrap(), 2.5);
        assert_eq!(r.get("seed", None, 1u64).unwrap(), 9);
        assert_eq!(r.get("draws", None, 100usize).unwrap(), 100);
        let out = r.finish().unwrap();
        assert_eq!(out["nu"], serde_json::json!(2.5));
        assert_eq!(out["seed"], serde_json::json!(9));
    }

    #[test]
    fn file_errors_carry_line_numbers() {
        let e = ConfigFile::parse("nu = 1\nbogus\n", "c").unwrap_err();
        assert!(e.message.contains("c:2:"));
        let file = ConfigFile::parse("nu = abc\n", "c").unwrap();
        let e = Resolver::new(Some(file)).get("nu", None, 0.5).unwrap_err();
        assert!(e.message.contains("c:1:"));
        let file = ConfigFile::parse("n_draws = 5\ntypo = 1\n", "c").unwrap();
        let mut r = Resolver::new(Some(file));
        assert_eq!(r.get("n-draws", None, 1usize).unwrap(), 5);
        let e = r.finish().unwrap_err();
        assert!(e.message.contains("typo") && e.code == 2);
    }

    #[test]
    fn lists() {
        assert_eq!(parse_list::<f64>("0.5, 1,1.5").unwrap(), vec![0.5, 1.0, 1.5]);
        assert!(parse_list::<f64>("0.5,x").is_err());
    }
}
