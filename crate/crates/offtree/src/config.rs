//! Flat `key=value` settings shared by config files, command-line flags and
//! run manifests.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

/// Keys are stored lower case with `_` folded to `-`, so `train_fraction`
/// and `train-fraction` name the same setting.
pub fn normalize_key(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('_', "-")
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Settings {
    entries: BTreeMap<String, String>,
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Line {
                line: i + 1,
                message: format!("expected `key=value`, found `{line}`"),
            })?;
            let key = normalize_key(k);
            if key.is_empty() {
                return Err(ConfigError::Line { line: i + 1, message: "empty key".into() });
            }
            if entries.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(ConfigError::Line { line: i + 1, message: format!("`{key}` is set twice") });
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    /// Later values win.
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(normalize_key(key), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn remove(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            writeln!(out, "{k}={v}").unwrap();
        }
        out
    }
}

/// Typed reads that collect every problem instead of stopping at the
/// first, and remember the resolved value of each key for the manifest.
pub struct Reader<'a> {
    settings: &'a Settings,
    errors: Vec<String>,
    resolved: Settings,
    known: BTreeSet<&'static str>,
}

impl<'a> Reader<'a> {
    pub fn new(settings: &'a Settings) -> Self {
        Self { settings, errors: Vec::new(), resolved: Settings::default(), known: BTreeSet::new() }
    }

    pub fn error(&mut self, message: impl Into<String>) {
        self.errors.push(message.into());
    }

    fn raw(&mut self, key: &'static str) -> Option<&'a str> {
        self.known.insert(key);
        self.settings.get(key)
    }

    /// Required string.
    pub fn require(&mut self, key: &'static str) -> String {
        match self.raw(key) {
            Some(v) if !v.is_empty() => {
                self.resolved.set(key, v);
                v.to_string()
            }
            _ => {
                self.error(format!("`{key}` is required"));
                String::new()
            }
        }
    }

    pub fn optional(&mut self, key: &'static str) -> Option<String> {
        let v = self.raw(key).filter(|v| !v.is_empty())?;
        self.resolved.set(key, v);
        Some(v.to_string())
    }

    /// Parsed value or `default`, which is recorded as resolved.
    pub fn parse<T>(&mut self, key: &'static str, default: T) -> T
    where
        T: FromStr + ToString,
        T::Err: std::fmt::Display,
    {
        let value = match self.raw(key) {
            None => default,
            Some(v) => match v.parse::<T>() {
                Ok(t) => t,
                Err(e) => {
                    self.error(format!("`{key}`: {e}"));
                    default
                }
            },
        };
        self.resolved.set(key, value.to_string());
        value
    }

    pub fn parse_optional<T>(&mut self, key: &'static str) -> Option<T>
    where
        T: FromStr + ToString,
        T::Err: std::fmt::Display,
    {
        let v = self.raw(key).filter(|v| !v.is_empty())?;
        match v.parse::<T>() {
            Ok(t) => {
                self.resolved.set(key, t.to_string());
                Some(t)
            }
            Err(e) => {
                self.error(format!("`{key}`: {e}"));
                None
            }
        }
    }

    pub fn flag(&mut self, key: &'static str, default: bool) -> bool {
        match self.raw(key) {
            None => {
                self.resolved.set(key, default.to_string());
                default
            }
            Some(v) => match v {
                "true" | "yes" | "1" | "on" => {
                    self.resolved.set(key, "true");
                    true
                }
                "false" | "no" | "0" | "off" => {
                    self.resolved.set(key, "false");
                    false
                }
                other => {
                    self.error(format!("`{key}`: expected true or false, found `{other}`"));
                    default
                }
            },
        }
    }

    /// Fails with every collected problem, including unknown keys.
    pub fn finish(mut self) -> Result<Settings, ConfigError> {
        let unknown: Vec<String> =
            self.settings.iter().map(|(k, _)| k).filter(|k| !self.known.contains(k)).map(str::to_string).collect();
        for k in unknown {
            self.errors.push(format!("unknown setting `{k}`"));
        }
        if self.errors.is_empty() {
            Ok(self.resolved)
        } else {
            Err(ConfigError::Invalid(self.errors))
        }
    }
}

pub fn sha256_file(path: &Path) -> Result<String, ConfigError> {
    let bytes = std::fs::read(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub const MANIFEST_HEADER: &str = "# offtree run manifest";

/// Everything needed to rerun a command: the resolved settings plus the
/// digests of its input files. It is itself a valid config file, so
/// `offtree --config <manifest> <command>` replays the run.
#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub settings: Settings,
    /// Setting key of the input file, and its SHA-256.
    pub digests: BTreeMap<String, String>,
}

impl Manifest {
    pub fn render(&self) -> String {
        let mut out = format!("{MANIFEST_HEADER}\ncommand={}\nversion={}\n", self.command, self.version);
        out.push_str(&self.settings.render());
        for (k, d) in &self.digests {
            writeln!(out, "digest.{k}={d}").unwrap();
        }
        out
    }
}

/// Removes manifest-only keys from a loaded config and checks them: the
/// command must match and the recorded inputs must be unchanged.
pub fn strip_manifest_keys(settings: &mut Settings, command: &str) -> Result<(), ConfigError> {
    let mut errors = Vec::new();
    if let Some(c) = settings.remove("command") {
        if c != command {
            errors.push(format!("config was recorded for `{c}`, not `{command}`"));
        }
    }
    settings.remove("version");
    let digest_keys: Vec<String> =
        settings.iter().map(|(k, _)| k).filter(|k| k.starts_with("digest.")).map(str::to_string).collect();
    for key in digest_keys {
        let expected = settings.remove(&key).unwrap_or_default();
        let input = &key["digest.".len()..];
        match settings.get(input) {
            None => errors.push(format!("`{key}` refers to missing setting `{input}`")),
            Some(path) => match sha256_file(Path::new(path)) {
                Ok(actual) if actual == expected => {}
                Ok(_) => errors.push(format!("input `{path}` changed since the manifest was written")),
                Err(e) => errors.push(e.to_string()),
            },
        }
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(ConfigError::Invalid(errors))
    }
}
