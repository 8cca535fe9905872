use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{CachedBackend, ChatBackend, GatewayError, HttpBackend, RetryPolicy, ScriptedBackend};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    /// Registered backend name, e.g. `http`, `scripted`, `cached-http`.
    pub kind: String,
    pub base_url: String,
    pub script_path: Option<PathBuf>,
    pub cache_dir: PathBuf,
    pub timeout_secs: u64,
    pub max_concurrency: usize,
    pub retry: RetryPolicy,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: "cached-http".into(),
            base_url: "https://api.openai.com/v1".into(),
            script_path: None,
            cache_dir: PathBuf::from(".finvision-cache"),
            timeout_secs: 120,
            max_concurrency: 4,
            retry: RetryPolicy::default(),
        }
    }
}

pub type BackendFactory =
    Box<dyn Fn(&BackendConfig) -> Result<Box<dyn ChatBackend>, GatewayError> + Send + Sync>;

/// Backend constructors keyed by `BackendConfig::kind`.
pub struct BackendRegistry {
    factories: BTreeMap<String, BackendFactory>,
}

fn http(cfg: &BackendConfig) -> Result<Box<dyn ChatBackend>, GatewayError> {
    if cfg.base_url.trim().is_empty() {
        return Err(GatewayError::Config("http backend needs a base_url".into()));
    }
    Ok(Box::new(HttpBackend::from_env(
        &cfg.base_url,
        Duration::from_secs(cfg.timeout_secs.max(1)),
        cfg.max_concurrency,
        cfg.retry,
    )))
}

fn scripted(cfg: &BackendConfig) -> Result<Box<dyn ChatBackend>, GatewayError> {
    let path = cfg
        .script_path
        .as_ref()
        .ok_or_else(|| GatewayError::Config("scripted backend needs a script_path".into()))?;
    Ok(Box::new(ScriptedBackend::from_file(path)?))
}

impl Default for BackendRegistry {
    fn default() -> Self {
        let mut reg = Self::empty();
        reg.register("http", Box::new(http));
        reg.register("scripted", Box::new(scripted));
        reg.register(
            "cached-http",
            Box::new(|cfg| Ok(Box::new(CachedBackend::new(http(cfg)?, &cfg.cache_dir)?))),
        );
        reg.register(
            "cached-scripted",
            Box::new(|cfg| Ok(Box::new(CachedBackend::new(scripted(cfg)?, &cfg.cache_dir)?))),
        );
        reg
    }
}

impl BackendRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &str, factory: BackendFactory) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn build(&self, cfg: &BackendConfig) -> Result<Box<dyn ChatBackend>, GatewayError> {
        let factory = self.factories.get(&cfg.kind).ok_or_else(|| {
            GatewayError::Config(format!(
                "unknown backend kind {:?} (known: {})",
                cfg.kind,
                self.names().join(", ")
            ))
        })?;
        factory(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_kind_lists_known() {
        let reg = BackendRegistry::default();
        let cfg = BackendConfig {
            kind: "carrier-pigeon".into(),
            ..Default::default()
        };
        let err = reg.build(&cfg).err().unwrap().to_string();
        assert!(err.contains("cached-http") && err.contains("scripted"), "{err}");
    }

    #[test]
    fn scripted_requires_path() {
        let cfg = BackendConfig {
            kind: "scripted".into(),
            ..Default::default()
        };
        assert!(matches!(
            BackendRegistry::default().build(&cfg),
            Err(GatewayError::Config(_))
        ));
    }
}
