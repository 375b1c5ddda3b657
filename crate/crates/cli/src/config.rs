//! Flat `key=value` config files and flag/file/default precedence.
//!
//! The format is deliberately primitive — one `key = value` pair per line,
//! `#` comments, no sections, no nesting — so manifests stay diff-friendly
//! and parsing needs nothing beyond the standard library. Consumers pull
//! typed values out of a [`ConfigMap`] one key at a time; whatever is left
//! when they finish is an unknown key and rejected, so misspelled settings
//! fail loudly instead of silently keeping their defaults.

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sparseproj::fbp::Filter;
use sparseproj::pipeline::TrainConfig;

use crate::error::CliError;

/// Parsed config file: keys in file order with their line numbers.
#[derive(Debug)]
pub struct ConfigMap {
    path: PathBuf,
    entries: BTreeMap<String, (String, usize)>,
}

impl ConfigMap {
    /// An empty map standing in for "no config file given".
    pub fn empty() -> ConfigMap {
        ConfigMap { path: PathBuf::from("<none>"), entries: BTreeMap::new() }
    }

    pub fn load(path: &Path) -> Result<ConfigMap, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        ConfigMap::parse(path, &text)
    }

    fn parse(path: &Path, text: &str) -> Result<ConfigMap, CliError> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!(
                    "{}:{line_no}: expected key=value, found {line:?}",
                    path.display()
                ))
            })?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(CliError::Usage(format!(
                    "{}:{line_no}: empty key before '='",
                    path.display()
                )));
            }
            if let Some((_, first)) = entries.insert(key.clone(), (value.trim().to_string(), line_no))
            {
                return Err(CliError::Usage(format!(
                    "{}:{line_no}: key {key:?} already set on line {first}",
                    path.display()
                )));
            }
        }
        Ok(ConfigMap { path: path.to_path_buf(), entries })
    }

    /// Takes one key out of the map, parsed as `T`; `None` if absent.
    pub fn take<T>(&mut self, key: &str) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: Debug,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((value, line_no)) => value.parse::<T>().map(Some).map_err(|_| {
                CliError::Usage(format!(
                    "{}:{line_no}: cannot parse {key}={value:?}",
                    self.path.display()
                ))
            }),
        }
    }

    /// Takes one key whose value is parsed by `parse` (for domain enums
    /// with their own name tables).
    pub fn take_with<T>(
        &mut self,
        key: &str,
        parse: impl Fn(&str) -> Option<T>,
    ) -> Result<Option<T>, CliError> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((value, line_no)) => parse(&value).map(Some).ok_or_else(|| {
                CliError::Usage(format!(
                    "{}:{line_no}: cannot parse {key}={value:?}",
                    self.path.display()
                ))
            }),
        }
    }

    /// Takes a comma-separated list, parsing each element with `parse`.
    pub fn take_list<T>(
        &mut self,
        key: &str,
        parse: impl Fn(&str) -> Option<T>,
    ) -> Result<Option<Vec<T>>, CliError> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((value, line_no)) => value
                .split(',')
                .map(|item| parse(item.trim()))
                .collect::<Option<Vec<T>>>()
                .map(Some)
                .ok_or_else(|| {
                    CliError::Usage(format!(
                        "{}:{line_no}: cannot parse {key}={value:?} as a comma-separated list",
                        self.path.display()
                    ))
                }),
        }
    }

    /// Rejects whatever keys nobody consumed.
    pub fn finish(self) -> Result<(), CliError> {
        if let Some((key, (_, line_no))) = self.entries.into_iter().next() {
            return Err(CliError::Usage(format!(
                "{}:{line_no}: unknown config key {key:?}",
                self.path.display()
            )));
        }
        Ok(())
    }
}

/// Per-field training overrides collected from command-line flags. A `Some`
/// here beats the config file, which beats the built-in default.
#[derive(Debug, Default, Clone)]
pub struct TrainOverrides {
    pub alpha: Option<f64>,
    pub lr: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub seed: Option<u64>,
    pub calib_trainable: Option<bool>,
    pub filter: Option<String>,
    pub log_every: Option<usize>,
}

/// Resolves a [`TrainConfig`] from flags over `file` over defaults. Consumes
/// the training keys from `file`; the caller still runs `finish` after
/// pulling out whatever other keys it owns.
pub fn resolve_train_config(
    file: &mut ConfigMap,
    flags: &TrainOverrides,
) -> Result<TrainConfig, CliError> {
    let defaults = TrainConfig::default();
    let file_filter = file.take_with("filter", Filter::parse)?;
    let config = TrainConfig {
        alpha: pick(flags.alpha, file.take("alpha")?, defaults.alpha),
        lr: pick(flags.lr, file.take("lr")?, defaults.lr),
        epochs: pick(flags.epochs, file.take("epochs")?, defaults.epochs),
        batch_size: pick(flags.batch_size, file.take("batch_size")?, defaults.batch_size),
        seed: pick(flags.seed, file.take("seed")?, defaults.seed),
        calib_trainable: pick(
            flags.calib_trainable,
            file.take("calib_trainable")?,
            defaults.calib_trainable,
        ),
        filter: match &flags.filter {
            Some(name) => Filter::parse(name).ok_or_else(|| {
                CliError::Usage(format!("--filter: unknown filter {name:?} (ramp|hann)"))
            })?,
            None => file_filter.unwrap_or(defaults.filter),
        },
        log_every: pick(flags.log_every, file.take("log_every")?, defaults.log_every),
    };
    if config.alpha < 0.0 {
        return Err(CliError::Usage(format!("alpha must be >= 0, got {}", config.alpha)));
    }
    if config.lr <= 0.0 {
        return Err(CliError::Usage(format!("lr must be > 0, got {}", config.lr)));
    }
    if config.epochs == 0 {
        return Err(CliError::Usage("epochs must be >= 1".into()));
    }
    if config.batch_size == 0 {
        return Err(CliError::Usage("batch_size must be >= 1".into()));
    }
    Ok(config)
}

fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}
