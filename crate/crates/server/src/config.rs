use std::path::PathBuf;

use ainsight_core::index::DEFAULT_TOP_K;
use ainsight_core::ingest::KnowledgeBase;
use ainsight_core::pipeline::{Engine, EngineConfig, DEFAULT_TICK_MS};
use ainsight_core::providers::{ProviderConfig, ProviderSet};
use ainsight_core::{Error, Result};

pub const DEFAULT_LISTEN_ADDR: &str = "127.0.0.1:8080";

/// Service settings, normally read from `AINSIGHT_*` environment variables.
#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub listen_addr: String,
    /// Knowledge-base root; tables are re-read from here when set.
    pub kb_dir: Option<PathBuf>,
    /// Directory written by `ainsight ingest`. Without it the service runs
    /// unconfigured and refuses new sessions.
    pub index_path: Option<PathBuf>,
    pub tick_ms: u64,
    pub top_k: usize,
    pub fixture_key: Option<String>,
    pub mock_fixtures: Option<PathBuf>,
    /// Static files served for paths no API route claims.
    pub ui_dir: Option<PathBuf>,
    pub provider: ProviderConfig,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            listen_addr: DEFAULT_LISTEN_ADDR.into(),
            kb_dir: None,
            index_path: None,
            tick_ms: DEFAULT_TICK_MS,
            top_k: DEFAULT_TOP_K,
            fixture_key: None,
            mock_fixtures: None,
            ui_dir: None,
            provider: ProviderConfig::default(),
        }
    }
}

fn parse<T: std::str::FromStr>(name: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{name}={value:?} is not a valid value")))
}

impl ServerConfig {
    pub fn from_env() -> Result<Self> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Self> {
        let get = |k: &str| lookup(k).filter(|v| !v.trim().is_empty());
        let mut config = ServerConfig {
            provider: ProviderConfig::from_lookup(&lookup)?,
            ..ServerConfig::default()
        };
        if let Some(v) = get("AINSIGHT_LISTEN_ADDR") {
            config.listen_addr = v;
        }
        config.kb_dir = get("AINSIGHT_KB_DIR").map(PathBuf::from);
        config.index_path = get("AINSIGHT_INDEX_PATH").map(PathBuf::from);
        if let Some(v) = get("AINSIGHT_TICK_MS") {
            config.tick_ms = parse("AINSIGHT_TICK_MS", &v)?;
        }
        if let Some(v) = get("AINSIGHT_TOP_K") {
            config.top_k = parse("AINSIGHT_TOP_K", &v)?;
        }
        config.fixture_key = get("AINSIGHT_FIXTURE_KEY");
        config.mock_fixtures = get("AINSIGHT_MOCK_FIXTURES").map(PathBuf::from);
        config.ui_dir = get("AINSIGHT_UI_DIR").map(PathBuf::from);
        Ok(config)
    }

    /// Opens the index and providers. `Ok(None)` when no index is configured;
    /// a configured but unreadable index is an error.
    pub fn build_engine(&self) -> Result<Option<Engine>> {
        let Some(index_path) = &self.index_path else {
            return Ok(None);
        };
        let kb = KnowledgeBase::open(index_path, self.kb_dir.as_deref())?;
        let providers = ProviderSet::from_config(&self.provider, self.mock_fixtures.as_deref())?;
        let engine = Engine::new(
            kb,
            providers,
            EngineConfig {
                tick_ms: self.tick_ms,
                top_k: self.top_k,
                fixture_key: self.fixture_key.clone(),
                ..EngineConfig::default()
            },
        )?;
        Ok(Some(engine))
    }
}
