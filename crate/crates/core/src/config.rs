//! `key = value` configuration files shared by jobs, the scheduler service
//! and simulation scenarios.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("config line {line_no}: {reason}")]
    Syntax { line_no: usize, reason: String },
    #[error("missing required key {0:?}")]
    Missing(&'static str),
    #[error("key {key:?}: {reason}")]
    Invalid { key: String, reason: String },
    #[error("unknown key {0:?}")]
    Unknown(String),
    #[error("cannot read config {path}: {reason}")]
    Io { path: PathBuf, reason: String },
}

/// Parsed key/value pairs plus the directory relative paths resolve against.
#[derive(Debug, Clone, Default)]
pub struct KvFile {
    values: BTreeMap<String, String>,
    base_dir: PathBuf,
}

impl KvFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line_no: n + 1,
                    reason: format!("expected `key = value`, got {line:?}"),
                });
            };
            let key = key.trim();
            if key.is_empty() {
                return Err(ConfigError::Syntax {
                    line_no: n + 1,
                    reason: "empty key".into(),
                });
            }
            if values.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(ConfigError::Syntax {
                    line_no: n + 1,
                    reason: format!("duplicate key {key:?}"),
                });
            }
        }
        Ok(KvFile {
            values,
            base_dir: PathBuf::new(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let mut kv = Self::parse(&text)?;
        kv.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(kv)
    }

    pub fn with_base_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.base_dir = dir.into();
        self
    }

    /// Fails on any key outside `allowed`.
    pub fn expect_keys(&self, allowed: &[&str]) -> Result<(), ConfigError> {
        match self.values.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(ConfigError::Unknown(k.clone())),
            None => Ok(()),
        }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(key.to_string(), value.into());
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .map(|v| {
                v.parse::<T>().map_err(|e| ConfigError::Invalid {
                    key: key.to_string(),
                    reason: e.to_string(),
                })
            })
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &'static str) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)?.ok_or(ConfigError::Missing(key))
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.raw(key).map(|v| {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                self.base_dir.join(p)
            }
        })
    }

    pub fn require_path(&self, key: &'static str) -> Result<PathBuf, ConfigError> {
        self.path(key).ok_or(ConfigError::Missing(key))
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some("true" | "yes" | "on" | "1") => Ok(true),
            Some("false" | "no" | "off" | "0") => Ok(false),
            Some(other) => Err(ConfigError::Invalid {
                key: key.to_string(),
                reason: format!("expected a boolean, got {other:?}"),
            }),
        }
    }

    pub fn duration_or(&self, key: &str, default: Duration) -> Result<Duration, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => parse_duration(v).map_err(|reason| ConfigError::Invalid {
                key: key.to_string(),
                reason,
            }),
        }
    }
}

/// Accepts `250ms`, `1.5s`, `2m` or a bare number of seconds.
pub fn parse_duration(text: &str) -> Result<Duration, String> {
    let t = text.trim();
    let (num, scale) = if let Some(n) = t.strip_suffix("ms") {
        (n, 1e-3)
    } else if let Some(n) = t.strip_suffix('s') {
        (n, 1.0)
    } else if let Some(n) = t.strip_suffix('m') {
        (n, 60.0)
    } else {
        (t, 1.0)
    };
    let value: f64 = num.trim().parse().map_err(|_| format!("bad duration {text:?}"))?;
    if !value.is_finite() || value < 0.0 {
        return Err(format!("bad duration {text:?}"));
    }
    Ok(Duration::from_secs_f64(value * scale))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_values() {
        let kv = KvFile::parse("# job\nmode = standalone\n\nworkers=4\nresource_path = data/r.tsv\n").unwrap();
        assert_eq!(kv.raw("mode"), Some("standalone"));
        assert_eq!(kv.get::<usize>("workers").unwrap(), Some(4));
        let kv = kv.with_base_dir("/etc/coterm");
        assert_eq!(kv.path("resource_path").unwrap(), PathBuf::from("/etc/coterm/data/r.tsv"));
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(matches!(KvFile::parse("novalue\n"), Err(ConfigError::Syntax { line_no: 1, .. })));
        assert!(KvFile::parse("a = 1\na = 2\n").is_err());
        let kv = KvFile::parse("workers = many\n").unwrap();
        assert!(matches!(kv.get::<usize>("workers"), Err(ConfigError::Invalid { .. })));
        assert!(matches!(kv.expect_keys(&["mode"]), Err(ConfigError::Unknown(_))));
    }

    #[test]
    fn durations() {
        assert_eq!(parse_duration("250ms").unwrap(), Duration::from_millis(250));
        assert_eq!(parse_duration("1.5s").unwrap(), Duration::from_millis(1500));
        assert_eq!(parse_duration("2m").unwrap(), Duration::from_secs(120));
        assert_eq!(parse_duration("3").unwrap(), Duration::from_secs(3));
        assert!(parse_duration("-1s").is_err());
        assert!(parse_duration("soon").is_err());
    }
}
