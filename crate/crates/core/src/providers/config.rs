use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderMode {
    Mock,
    Http,
}

impl std::fmt::Display for ProviderMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ProviderMode::Mock => "mock",
            ProviderMode::Http => "http",
        })
    }
}

#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub mode: ProviderMode,
    pub base_url: String,
    pub api_key: String,
    pub chat_model: String,
    pub embed_model: String,
    pub transcribe_model: String,
    pub timeout_ms: u64,
}

impl std::fmt::Debug for ProviderConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProviderConfig")
            .field("mode", &self.mode)
            .field("base_url", &self.base_url)
            .field("api_key", &"<redacted>")
            .field("chat_model", &self.chat_model)
            .field("embed_model", &self.embed_model)
            .field("transcribe_model", &self.transcribe_model)
            .field("timeout_ms", &self.timeout_ms)
            .finish()
    }
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            mode: ProviderMode::Mock,
            base_url: String::new(),
            api_key: String::new(),
            chat_model: "gpt-4o".into(),
            embed_model: "text-embedding-3-small".into(),
            transcribe_model: "whisper-1".into(),
            timeout_ms: 30_000,
        }
    }
}

impl ProviderConfig {
    /// Reads `AINSIGHT_*` variables from the process environment.
    pub fn from_env() -> Result<Self> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Self> {
        let mut config = ProviderConfig::default();
        if let Some(mode) = lookup("AINSIGHT_PROVIDER_MODE") {
            config.mode = match mode.trim().to_ascii_lowercase().as_str() {
                "mock" => ProviderMode::Mock,
                "http" => ProviderMode::Http,
                other => {
                    return Err(Error::Config(format!(
                        "AINSIGHT_PROVIDER_MODE must be mock or http, got {other:?}"
                    )))
                }
            };
        }
        if let Some(v) = lookup("AINSIGHT_BASE_URL") {
            config.base_url = v;
        }
        if let Some(v) = lookup("AINSIGHT_API_KEY") {
            config.api_key = v;
        }
        if let Some(v) = lookup("AINSIGHT_CHAT_MODEL") {
            config.chat_model = v;
        }
        if let Some(v) = lookup("AINSIGHT_EMBED_MODEL") {
            config.embed_model = v;
        }
        if let Some(v) = lookup("AINSIGHT_TRANSCRIBE_MODEL") {
            config.transcribe_model = v;
        }
        if let Some(v) = lookup("AINSIGHT_TIMEOUT_MS") {
            config.timeout_ms = v.trim().parse().map_err(|_| {
                Error::Config(format!("AINSIGHT_TIMEOUT_MS is not an integer: {v:?}"))
            })?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.timeout_ms == 0 {
            return Err(Error::Config("timeout_ms must be positive".into()));
        }
        if self.mode == ProviderMode::Http {
            if self.base_url.trim().is_empty() {
                return Err(Error::Config("http mode requires AINSIGHT_BASE_URL".into()));
            }
            if self.api_key.trim().is_empty() {
                return Err(Error::Config("http mode requires AINSIGHT_API_KEY".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn lookup(pairs: &[(&str, &str)]) -> impl Fn(&str) -> Option<String> {
        let map: HashMap<String, String> = pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        move |k| map.get(k).cloned()
    }

    #[test]
    fn defaults_to_mock() {
        let c = ProviderConfig::from_lookup(lookup(&[])).unwrap();
        assert_eq!(c.mode, ProviderMode::Mock);
        assert_eq!(c.timeout_ms, 30_000);
    }

    #[test]
    fn http_requires_url_and_key() {
        assert!(
            ProviderConfig::from_lookup(lookup(&[("AINSIGHT_PROVIDER_MODE", "http")])).is_err()
        );
        let c = ProviderConfig::from_lookup(lookup(&[
            ("AINSIGHT_PROVIDER_MODE", "HTTP"),
            ("AINSIGHT_BASE_URL", "http://localhost:9"),
            ("AINSIGHT_API_KEY", "sk-test"),
            ("AINSIGHT_TIMEOUT_MS", "500"),
        ]))
        .unwrap();
        assert_eq!(c.mode, ProviderMode::Http);
        assert_eq!(c.timeout_ms, 500);
        assert!(!format!("{c:?}").contains("sk-test"));
    }

    #[test]
    fn rejects_zero_timeout_and_bad_mode() {
        assert!(ProviderConfig::from_lookup(lookup(&[("AINSIGHT_TIMEOUT_MS", "0")])).is_err());
        assert!(
            ProviderConfig::from_lookup(lookup(&[("AINSIGHT_PROVIDER_MODE", "azure")])).is_err()
        );
    }
}
