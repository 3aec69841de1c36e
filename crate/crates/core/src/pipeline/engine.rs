use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use super::clock::{Clock, WallClock};
use super::insight::{DEFAULT_MAX_INSIGHTS_PER_TICK, DEFAULT_MAX_TOOL_ROUNDS};
use super::prompts::Prompts;
use super::session::{Session, SessionSettings};
use crate::error::{Error, Result};
use crate::index::DEFAULT_TOP_K;
use crate::ingest::KnowledgeBase;
use crate::providers::{ProviderMode, ProviderSet};

pub const DEFAULT_TICK_MS: u64 = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub tick_ms: u64,
    pub top_k: usize,
    pub max_insights_per_tick: usize,
    pub max_tool_rounds: usize,
    /// Default mock fixture prefix for new sessions.
    pub fixture_key: Option<String>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            tick_ms: DEFAULT_TICK_MS,
            top_k: DEFAULT_TOP_K,
            max_insights_per_tick: DEFAULT_MAX_INSIGHTS_PER_TICK,
            max_tool_rounds: DEFAULT_MAX_TOOL_ROUNDS,
            fixture_key: None,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tick_ms == 0 {
            return Err(Error::Config("tick_ms must be positive".into()));
        }
        if self.top_k == 0 {
            return Err(Error::Config("top_k must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Default, Clone)]
pub struct SessionConfig {
    pub session_id: Option<String>,
    pub fixture_key: Option<String>,
    /// Overrides the engine clock, e.g. a simulated clock for one replay.
    pub clock: Option<Arc<dyn Clock>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub index_size: usize,
    pub provider_mode: ProviderMode,
    pub tick_ms: u64,
    pub sessions: usize,
}

/// Shared knowledge base and providers plus the live sessions.
pub struct Engine {
    kb: Arc<KnowledgeBase>,
    providers: ProviderSet,
    prompts: Arc<Prompts>,
    clock: Arc<dyn Clock>,
    config: EngineConfig,
    sessions: RwLock<BTreeMap<String, Arc<Session>>>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("config", &self.config)
            .field("index_size", &self.kb.index.len())
            .finish_non_exhaustive()
    }
}

impl Engine {
    pub fn new(kb: KnowledgeBase, providers: ProviderSet, config: EngineConfig) -> Result<Self> {
        config.validate()?;
        Ok(Engine {
            kb: Arc::new(kb),
            providers,
            prompts: Arc::new(Prompts::default()),
            clock: Arc::new(WallClock),
            config,
            sessions: RwLock::new(BTreeMap::new()),
        })
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_prompts(mut self, prompts: Prompts) -> Self {
        self.prompts = Arc::new(prompts);
        self
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn knowledge_base(&self) -> &Arc<KnowledgeBase> {
        &self.kb
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    /// Usage across every session of this engine.
    pub fn providers(&self) -> &ProviderSet {
        &self.providers
    }

    pub fn create_session(&self, config: SessionConfig) -> Result<Arc<Session>> {
        if self.kb.index.is_empty() {
            return Err(Error::EmptyKnowledgeBase(self.kb.manifest.kb_root.clone()));
        }
        let id = config
            .session_id
            .unwrap_or_else(|| uuid::Uuid::new_v4().to_string());
        let mut sessions = self.sessions.write().unwrap_or_else(|e| e.into_inner());
        if sessions.contains_key(&id) {
            return Err(Error::DuplicateSession(id));
        }
        let settings = SessionSettings {
            tick_ms: self.config.tick_ms,
            top_k: self.config.top_k,
            max_insights_per_tick: self.config.max_insights_per_tick,
            max_tool_rounds: self.config.max_tool_rounds,
            fixture_key: config
                .fixture_key
                .or_else(|| self.config.fixture_key.clone()),
        };
        let session = Arc::new(Session::new(
            id.clone(),
            settings,
            self.providers.scoped(),
            config.clock.unwrap_or_else(|| self.clock.clone()),
            self.kb.clone(),
            self.prompts.clone(),
        ));
        sessions.insert(id, session.clone());
        Ok(session)
    }

    pub fn session(&self, id: &str) -> Result<Arc<Session>> {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| Error::UnknownSession(id.to_string()))
    }

    pub fn session_ids(&self) -> Vec<String> {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .keys()
            .cloned()
            .collect()
    }

    pub fn health(&self) -> Health {
        Health {
            status: if self.kb.index.is_empty() {
                "degraded"
            } else {
                "ok"
            }
            .into(),
            index_size: self.kb.index.len(),
            provider_mode: self.providers.mode,
            tick_ms: self.config.tick_ms,
            sessions: self
                .sessions
                .read()
                .unwrap_or_else(|e| e.into_inner())
                .len(),
        }
    }
}
