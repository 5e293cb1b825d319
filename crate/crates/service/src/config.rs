use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use smartreply_core::GuardConfig;

use crate::ServiceError;

/// Environment variable that overrides the listen address.
pub const LISTEN_ENV: &str = "SMARTREPLY_LISTEN";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPaths {
    pub embedding: PathBuf,
    pub centroids: PathBuf,
    pub catalog: PathBuf,
}

impl ModelPaths {
    /// The file names the CLI writes into a models directory.
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            embedding: dir.join("embedding.model"),
            centroids: dir.join("centroids.model"),
            catalog: dir.join("catalog.json"),
        }
    }
}

impl Default for ModelPaths {
    fn default() -> Self {
        Self::in_dir(Path::new("models"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen_address: String,
    pub model_paths: ModelPaths,
    pub guard: GuardConfig,
    pub intents_k: usize,
    pub request_timeout_ms: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen_address: "127.0.0.1:8080".into(),
            model_paths: ModelPaths::default(),
            guard: GuardConfig::default(),
            intents_k: 2,
            request_timeout_ms: 5_000,
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ServiceError> {
        let config: Self = toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ServiceError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Applies `SMARTREPLY_LISTEN` if set. Call after flags so the
    /// environment wins.
    pub fn apply_env(&mut self) {
        self.apply_env_from(|key| std::env::var(key).ok());
    }

    pub fn apply_env_from<F: Fn(&str) -> Option<String>>(&mut self, lookup: F) {
        if let Some(addr) = lookup(LISTEN_ENV).filter(|a| !a.trim().is_empty()) {
            self.listen_address = addr.trim().to_string();
        }
    }

    pub fn request_timeout(&self) -> Duration {
        Duration::from_millis(self.request_timeout_ms)
    }

    pub fn socket_addr(&self) -> Result<SocketAddr, ServiceError> {
        self.listen_address
            .parse()
            .map_err(|e| ServiceError::Config(format!("listen_address {:?}: {e}", self.listen_address)))
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        self.socket_addr()?;
        self.guard.validate().map_err(ServiceError::Config)?;
        if self.intents_k == 0 {
            return Err(ServiceError::Config("intents_k must be at least 1".into()));
        }
        if self.request_timeout_ms == 0 {
            return Err(ServiceError::Config("request_timeout_ms must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_toml_keeps_defaults() {
        let c = ServiceConfig::from_toml("intents_k = 3\n[guard]\nmin_top_score = 0.25\n").unwrap();
        assert_eq!(c.intents_k, 3);
        assert_eq!(c.guard.min_top_score, 0.25);
        assert_eq!(c.guard.max_replies, 4);
        assert_eq!(c.listen_address, "127.0.0.1:8080");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ServiceConfig::from_toml("listen = \"x\"").is_err());
    }

    #[test]
    fn env_overrides_listen_address() {
        let mut c = ServiceConfig::default();
        c.apply_env_from(|k| (k == LISTEN_ENV).then(|| "0.0.0.0:9000".to_string()));
        assert_eq!(c.listen_address, "0.0.0.0:9000");
        c.apply_env_from(|_| Some("  ".into()));
        assert_eq!(c.listen_address, "0.0.0.0:9000");
    }

    #[test]
    fn validation() {
        assert!(ServiceConfig::default().validate().is_ok());
        let bad = ServiceConfig { listen_address: "nowhere".into(), ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = ServiceConfig { intents_k: 0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
