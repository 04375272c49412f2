//! Settings shared by every subcommand.
//!
//! Each field resolves from, in decreasing priority: a command-line flag, a
//! `DIACHRON_*` environment variable, the TOML config file, the default.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::scoring::{RetryPolicy, ScorerOptions};
use crate::temporal::Mode;

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    /// Registry file; the built-in registry when unset.
    pub registry: Option<PathBuf>,
    pub mode: String,
    pub batch_size: usize,
    pub retry_attempts: u32,
    pub retry_backoff_ms: u64,
    pub timeout_secs: u64,
    pub seed: u64,
    /// Decimals for pseudo-perplexities; percentages use one less.
    pub precision: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            registry: None,
            mode: "latest".into(),
            batch_size: 32,
            retry_attempts: 3,
            retry_backoff_ms: 250,
            timeout_secs: 30,
            seed: 0,
            precision: 3,
        }
    }
}

/// One layer of settings; unset fields fall through to the next layer.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub registry: Option<PathBuf>,
    pub mode: Option<String>,
    pub batch_size: Option<usize>,
    pub retry_attempts: Option<u32>,
    pub retry_backoff_ms: Option<u64>,
    pub timeout_secs: Option<u64>,
    pub seed: Option<u64>,
    pub precision: Option<usize>,
}

pub const CONFIG_ENV: &str = "DIACHRON_CONFIG";

fn env_value<T: std::str::FromStr>(
    env: &dyn Fn(&str) -> Option<String>,
    key: &str,
) -> Result<Option<T>> {
    match env(key) {
        None => Ok(None),
        Some(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::invalid(format!("{key}={v:?} is not a valid value"))),
    }
}

impl Overrides {
    /// Reads a TOML file with the same keys as [`Config`].
    pub fn from_file(path: &Path) -> Result<Self> {
        let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut o: Overrides =
            toml::from_str(&body).map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
        if let (Some(reg), Some(dir)) = (&o.registry, path.parent()) {
            if reg.is_relative() {
                o.registry = Some(dir.join(reg));
            }
        }
        Ok(o)
    }

    /// Reads `DIACHRON_REGISTRY`, `DIACHRON_MODE`, ... through `env`.
    pub fn from_env(env: &dyn Fn(&str) -> Option<String>) -> Result<Self> {
        Ok(Self {
            registry: env("DIACHRON_REGISTRY").map(PathBuf::from),
            mode: env("DIACHRON_MODE"),
            batch_size: env_value(env, "DIACHRON_BATCH_SIZE")?,
            retry_attempts: env_value(env, "DIACHRON_RETRY_ATTEMPTS")?,
            retry_backoff_ms: env_value(env, "DIACHRON_RETRY_BACKOFF_MS")?,
            timeout_secs: env_value(env, "DIACHRON_TIMEOUT_SECS")?,
            seed: env_value(env, "DIACHRON_SEED")?,
            precision: env_value(env, "DIACHRON_PRECISION")?,
        })
    }

    fn apply(self, c: &mut Config) {
        if let Some(v) = self.registry {
            c.registry = Some(v);
        }
        if let Some(v) = self.mode {
            c.mode = v;
        }
        if let Some(v) = self.batch_size {
            c.batch_size = v;
        }
        if let Some(v) = self.retry_attempts {
            c.retry_attempts = v;
        }
        if let Some(v) = self.retry_backoff_ms {
            c.retry_backoff_ms = v;
        }
        if let Some(v) = self.timeout_secs {
            c.timeout_secs = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.precision {
            c.precision = v;
        }
    }
}

impl Config {
    /// Layers defaults, the config file, the environment and flags.
    ///
    /// The file is `config_path` if given, else `$DIACHRON_CONFIG` if set.
    pub fn resolve(
        config_path: Option<&Path>,
        env: &dyn Fn(&str) -> Option<String>,
        flags: Overrides,
    ) -> Result<Self> {
        let mut c = Config::default();
        let file = config_path
            .map(Path::to_path_buf)
            .or_else(|| env(CONFIG_ENV).map(PathBuf::from));
        if let Some(path) = file {
            Overrides::from_file(&path)?.apply(&mut c);
        }
        Overrides::from_env(env)?.apply(&mut c);
        flags.apply(&mut c);
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.mode.parse::<Mode>()?;
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        if self.retry_attempts == 0 {
            return Err(Error::invalid("retry_attempts must be positive"));
        }
        if self.timeout_secs == 0 {
            return Err(Error::invalid("timeout_secs must be positive"));
        }
        if self.precision > 12 {
            return Err(Error::invalid("precision above 12 decimals"));
        }
        Ok(())
    }

    pub fn scorer_options(&self) -> ScorerOptions {
        ScorerOptions {
            batch_size: self.batch_size,
            retry: RetryPolicy {
                attempts: self.retry_attempts,
                backoff: Duration::from_millis(self.retry_backoff_ms),
            },
            timeout: Duration::from_secs(self.timeout_secs),
            ..ScorerOptions::default()
        }
    }
}
