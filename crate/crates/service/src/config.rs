use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ENV_PREFIX: &str = "RADEVAL_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: String, source: toml::de::Error },
    #[error("environment variable {name}: {message}")]
    Env { name: String, message: String },
}

/// Server settings. Each value comes from the environment (`RADEVAL_*`)
/// when set, else the config file, else the default.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub data_dir: PathBuf,
    /// Bearer token for `/v1/admin/*`; admin endpoints are disabled without it.
    pub admin_token: Option<String>,
    /// Key for session tokens and access codes. A random key is drawn at
    /// startup when unset, so sessions do not survive a restart.
    pub session_secret: Option<String>,
    pub session_ttl_secs: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            data_dir: PathBuf::from("data"),
            admin_token: None,
            session_secret: None,
            session_ttl_secs: 8 * 3600,
        }
    }
}

impl ServiceConfig {
    pub fn load(file: Option<&Path>) -> Result<Self, ConfigError> {
        Self::resolve(file, |name| std::env::var(name).ok())
    }

    /// `load` with an injectable environment lookup.
    pub fn resolve(file: Option<&Path>, env: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let mut config = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
                toml::from_str(&text).map_err(|source| ConfigError::Parse { path: path.display().to_string(), source })?
            }
            None => ServiceConfig::default(),
        };
        let var = |key: &str| {
            let name = format!("{ENV_PREFIX}{key}");
            env(&name).map(|v| (name, v))
        };
        fn parsed<T: std::str::FromStr>(name: String, value: String) -> Result<T, ConfigError>
        where
            T::Err: std::fmt::Display,
        {
            value.parse().map_err(|e: T::Err| ConfigError::Env { name, message: e.to_string() })
        }
        if let Some((name, v)) = var("LISTEN") {
            config.listen = parsed(name, v)?;
        }
        if let Some((_, v)) = var("DATA_DIR") {
            config.data_dir = PathBuf::from(v);
        }
        if let Some((_, v)) = var("ADMIN_TOKEN") {
            config.admin_token = Some(v);
        }
        if let Some((_, v)) = var("SESSION_SECRET") {
            config.session_secret = Some(v);
        }
        if let Some((name, v)) = var("SESSION_TTL_SECS") {
            config.session_ttl_secs = parsed(name, v)?;
        }
        Ok(config)
    }

    pub fn log_path(&self) -> PathBuf {
        self.data_dir.join("events.log")
    }

    pub fn images_dir(&self) -> PathBuf {
        self.data_dir.join("images")
    }
}
