//! Resolved run configuration and its sidecar format.
//!
//! Every subcommand materializes each setting it uses (flag wins over config
//! file wins over built-in default) and echoes the fully resolved set to a
//! `<output>.run.txt` sidecar, one `key = value` per line, sorted. Passing
//! that sidecar back via `--config` reproduces the run.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nodefield::{Error, Result};

pub struct RunConfig {
    file: BTreeMap<String, String>,
    resolved: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn load(subcommand: &str, config_path: Option<&Path>) -> Result<Self> {
        let mut file = BTreeMap::new();
        if let Some(path) = config_path {
            let text = fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.to_path_buf(),
                source: e,
            })?;
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: "expected `key = value`".into(),
                })?;
                file.insert(k.trim().to_string(), v.trim().to_string());
            }
            if let Some(sc) = file.get("subcommand") {
                if sc != subcommand {
                    return Err(Error::Config(format!(
                        "config file is for `{}`, not `{}`",
                        sc, subcommand
                    )));
                }
            }
        }
        let mut resolved = BTreeMap::new();
        resolved.insert("subcommand".into(), subcommand.into());
        Ok(Self { file, resolved })
    }

    /// Flag > config file > default.
    pub fn get<T: FromStr + Display>(
        &mut self,
        key: &str,
        flag: Option<T>,
        default: T,
    ) -> Result<T> {
        let value = match flag {
            Some(v) => v,
            None => match self.file.get(key) {
                Some(raw) => raw.parse::<T>().map_err(|_| {
                    Error::Config(format!("config key `{}` has invalid value `{}`", key, raw))
                })?,
                None => default,
            },
        };
        self.resolved.insert(key.into(), value.to_string());
        Ok(value)
    }

    /// Required setting with no default.
    pub fn get_required<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<T> {
        let value = match flag {
            Some(v) => v,
            None => {
                let raw = self.file.get(key).ok_or_else(|| {
                    Error::Config(format!("missing required setting `--{}`", key))
                })?;
                raw.parse::<T>().map_err(|_| {
                    Error::Config(format!("config key `{}` has invalid value `{}`", key, raw))
                })?
            }
        };
        self.resolved.insert(key.into(), value.to_string());
        Ok(value)
    }

    /// Optional setting; absent stays absent (recorded as `none`).
    pub fn get_optional<T: FromStr + Display>(
        &mut self,
        key: &str,
        flag: Option<T>,
    ) -> Result<Option<T>> {
        let value = match flag {
            Some(v) => Some(v),
            None => match self.file.get(key).filter(|r| r.as_str() != "none") {
                Some(raw) => Some(raw.parse::<T>().map_err(|_| {
                    Error::Config(format!("config key `{}` has invalid value `{}`", key, raw))
                })?),
                None => None,
            },
        };
        self.resolved.insert(
            key.into(),
            value
                .as_ref()
                .map(|v| v.to_string())
                .unwrap_or_else(|| "none".into()),
        );
        Ok(value)
    }

    pub fn get_path(&mut self, key: &str, flag: Option<PathBuf>) -> Result<PathBuf> {
        let s = self.get_required::<String>(key, flag.map(|p| p.display().to_string()))?;
        Ok(PathBuf::from(s))
    }

    pub fn get_path_optional(
        &mut self,
        key: &str,
        flag: Option<PathBuf>,
    ) -> Result<Option<PathBuf>> {
        Ok(self
            .get_optional::<String>(key, flag.map(|p| p.display().to_string()))?
            .map(PathBuf::from))
    }

    /// Write the resolved settings next to `output`.
    pub fn write_sidecar(&self, output: &Path) -> Result<()> {
        let mut text = String::new();
        for (k, v) in &self.resolved {
            text.push_str(&format!("{} = {}\n", k, v));
        }
        let path = sidecar_path(output);
        fs::write(&path, text).map_err(|e| Error::Io { path, source: e })
    }
}

pub fn sidecar_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".run.txt");
    output.with_file_name(name)
}
