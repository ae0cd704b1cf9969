use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use delib_core::llm::API_KEY_ENV;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Parse(#[from] toml::de::Error),
    #[error("{0}")]
    Invalid(String),
}

/// Server configuration, read from TOML. The language-model credential is
/// never part of the file: the HTTP adapter reads it from the environment
/// variable named by [`API_KEY_ENV`].
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_listen")]
    pub listen: SocketAddr,
    /// Labelled dataset CSV; split into training data and the case pool.
    pub dataset: PathBuf,
    /// Saved model; fitted on the training split when absent.
    #[serde(default)]
    pub model: Option<PathBuf>,
    #[serde(default = "default_split")]
    pub split: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Conflict threshold in percentage points.
    #[serde(default = "default_tau")]
    pub conflict_threshold: f64,
    /// Overrides the model's uncertainty halfgap.
    #[serde(default)]
    pub halfgap: Option<f64>,
    /// Directory for per-session JSONL event logs.
    #[serde(default = "default_log_dir")]
    pub log_dir: PathBuf,
    #[serde(default)]
    pub adapter: AdapterConfig,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AdapterConfig {
    Mock {
        #[serde(default)]
        seed: u64,
    },
    Http {
        endpoint: String,
        model: String,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
    },
}

impl Default for AdapterConfig {
    fn default() -> Self {
        AdapterConfig::Mock { seed: 0 }
    }
}

impl AdapterConfig {
    pub fn timeout(&self) -> Duration {
        match self {
            AdapterConfig::Http { timeout_secs, .. } => Duration::from_secs(*timeout_secs),
            AdapterConfig::Mock { .. } => Duration::ZERO,
        }
    }
}

fn default_listen() -> SocketAddr {
    SocketAddr::from(([127, 0, 0, 1], 8080))
}

fn default_split() -> f64 {
    0.7
}

fn default_seed() -> u64 {
    42
}

fn default_tau() -> f64 {
    delib_core::woe::DEFAULT_CONFLICT_THRESHOLD
}

fn default_log_dir() -> PathBuf {
    PathBuf::from("sessions")
}

fn default_timeout() -> u64 {
    30
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: ServiceConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Reads the file; relative paths inside it resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            let resolve = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            };
            resolve(&mut config.dataset);
            resolve(&mut config.log_dir);
            if let Some(m) = config.model.as_mut() {
                resolve(m);
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.conflict_threshold >= 0.0 && self.conflict_threshold.is_finite()) {
            return Err(ConfigError::Invalid(format!(
                "conflict_threshold must be a finite number >= 0, got {}",
                self.conflict_threshold
            )));
        }
        if let Some(h) = self.halfgap {
            if !(h > 0.0 && h.is_finite()) {
                return Err(ConfigError::Invalid(format!("halfgap must be > 0, got {h}")));
            }
        }
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(ConfigError::Invalid(format!("split must be in (0, 1), got {}", self.split)));
        }
        Ok(())
    }

    pub fn credential_env(&self) -> &'static str {
        API_KEY_ENV
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = ServiceConfig::from_toml("dataset = \"d.csv\"").unwrap();
        assert_eq!(c.adapter, AdapterConfig::Mock { seed: 0 });
        assert_eq!(c.conflict_threshold, 5.0);
        assert_eq!(c.split, 0.7);
    }

    #[test]
    fn http_adapter_section() {
        let c = ServiceConfig::from_toml(
            "dataset = \"d.csv\"\n[adapter]\nkind = \"http\"\nendpoint = \"http://localhost:9/v1/chat/completions\"\nmodel = \"m\"\n",
        )
        .unwrap();
        assert!(matches!(c.adapter, AdapterConfig::Http { timeout_secs: 30, .. }));
    }

    #[test]
    fn credentials_in_file_are_rejected() {
        let err = ServiceConfig::from_toml(
            "dataset = \"d.csv\"\n[adapter]\nkind = \"http\"\nendpoint = \"e\"\nmodel = \"m\"\napi_key = \"secret\"\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("api_key"), "{err}");
    }

    #[test]
    fn invariants_are_checked() {
        assert!(ServiceConfig::from_toml("dataset = \"d\"\nconflict_threshold = -1.0").is_err());
        assert!(ServiceConfig::from_toml("dataset = \"d\"\nhalfgap = 0.0").is_err());
    }
}
