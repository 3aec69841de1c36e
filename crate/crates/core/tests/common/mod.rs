#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use ainsight_core::ingest::{ChunkingParams, KnowledgeBase};
use ainsight_core::pipeline::{Engine, EngineConfig, SimClock};
use ainsight_core::providers::{ChatModel, MockChat, MockEmbedder, ProviderSet, ResponseFormat};
use ainsight_core::Result;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn fixture_kb() -> KnowledgeBase {
    KnowledgeBase::ingest(
        fixtures().join("kb"),
        &ChunkingParams::default(),
        &MockEmbedder,
    )
    .unwrap()
}

pub fn fixture_chat() -> MockChat {
    MockChat::from_dir(fixtures().join("mock")).unwrap()
}

pub fn engine_with(chat: Arc<dyn ChatModel>, tick_ms: u64) -> (Engine, Arc<SimClock>) {
    let clock = Arc::new(SimClock::new(0));
    let providers = ProviderSet::mock(None).unwrap().with_chat(chat);
    let config = EngineConfig {
        tick_ms,
        ..EngineConfig::default()
    };
    let engine = Engine::new(fixture_kb(), providers, config)
        .unwrap()
        .with_clock(clock.clone());
    (engine, clock)
}

pub fn fixture_engine(tick_ms: u64) -> (Engine, Arc<SimClock>) {
    engine_with(Arc::new(fixture_chat()), tick_ms)
}

/// Chat wrapper that remembers every prompt it was sent.
pub struct Recorder<C> {
    pub inner: C,
    pub prompts: Mutex<Vec<String>>,
}

impl<C> Recorder<C> {
    pub fn new(inner: C) -> Self {
        Recorder {
            inner,
            prompts: Mutex::new(Vec::new()),
        }
    }

    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().unwrap().clone()
    }
}

impl<C: ChatModel> ChatModel for Recorder<C> {
    fn complete(&self, prompt: &str, format: ResponseFormat) -> Result<String> {
        self.prompts.lock().unwrap().push(prompt.to_string());
        self.inner.complete(prompt, format)
    }
}
