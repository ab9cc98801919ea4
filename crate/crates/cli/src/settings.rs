//! Flat `key = value` configuration, merged under command-line flags, and the
//! metadata header that stamps every output.
//!
//! Config files hold one `key = value` per line; `#` starts a comment. Lists
//! are comma-separated. A flag given on the command line wins over the file.

use std::collections::BTreeMap;
use std::fmt::{Display, Write as _};
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::parse(format!("config line {}: expected key = value", no + 1)));
        };
        let key = k.trim();
        if key.is_empty() || map.insert(key.to_string(), v.trim().to_string()).is_some() {
            return Err(CliError::parse(format!("config line {}: empty or repeated key '{key}'", no + 1)));
        }
    }
    Ok(map)
}

pub fn read_config(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config(&text)
}

/// Resolves each setting from flag, then file, then default, remembering
/// what was used so the run can be hashed.
#[derive(Debug, Default)]
pub struct Settings {
    file: BTreeMap<String, String>,
    used: BTreeMap<String, String>,
}

impl Settings {
    pub fn new(file: BTreeMap<String, String>) -> Self {
        Self { file, used: BTreeMap::new() }
    }

    pub fn get<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T: FromStr + Display,
    {
        let v = match flag {
            Some(v) => v,
            None => match self.file.get(key) {
                Some(s) => parse_value(key, s)?,
                None => default,
            },
        };
        self.used.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    pub fn optional<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T: FromStr + Display,
    {
        let v = match flag {
            Some(v) => Some(v),
            None => self.file.get(key).map(|s| parse_value(key, s)).transpose()?,
        };
        if let Some(v) = &v {
            self.used.insert(key.to_string(), v.to_string());
        }
        Ok(v)
    }

    pub fn list<T>(&mut self, key: &str, flag: Option<&str>, default: &str) -> Result<Vec<T>, CliError>
    where
        T: FromStr,
    {
        let raw = flag.map(str::to_string).or_else(|| self.file.get(key).cloned()).unwrap_or_else(|| default.to_string());
        let items = raw
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| parse_value(key, s))
            .collect::<Result<Vec<T>, _>>()?;
        self.used.insert(key.to_string(), raw);
        Ok(items)
    }

    /// Raw file entries whose key starts with `prefix`, with the prefix removed.
    pub fn with_prefix(&mut self, prefix: &str) -> BTreeMap<String, String> {
        let found: BTreeMap<String, String> = self
            .file
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(prefix).map(|rest| (rest.to_string(), v.clone())))
            .collect();
        for (k, v) in &found {
            self.used.insert(format!("{prefix}{k}"), v.clone());
        }
        found
    }

    pub fn forget(&mut self, keys: &[&str]) {
        for k in keys {
            self.used.remove(*k);
        }
    }

    /// SHA-256 over the command name and every resolved setting.
    pub fn hash(&self, command: &str) -> String {
        let mut h = Sha256::new();
        h.update(command.as_bytes());
        h.update(b"\n");
        for (k, v) in &self.used {
            h.update(format!("{k}={v}\n").as_bytes());
        }
        h.finalize().iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

fn parse_value<T: FromStr>(key: &str, s: &str) -> Result<T, CliError> {
    s.trim().parse().map_err(|_| CliError::parse(format!("setting '{key}': cannot parse '{s}'")))
}

/// `#`-prefixed lines identifying the run; identical inputs give identical headers.
#[derive(Debug, Clone)]
pub struct Header {
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
}

impl Header {
    pub fn lines(&self) -> String {
        format!(
            "# ounoise {VERSION}\n# command: {}\n# seed: {}\n# config_sha256: {}\n# rng: {}\n",
            self.command,
            self.seed,
            self.config_hash,
            ounoise::sim::RNG_SCHEME
        )
    }
}
