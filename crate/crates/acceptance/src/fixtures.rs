use std::path::PathBuf;
use std::sync::Arc;

use ainsight_core::ingest::{ChunkingParams, KnowledgeBase};
use ainsight_core::pipeline::{Engine, EngineConfig, SimClock};
use ainsight_core::providers::{ChatModel, MockChat, MockEmbedder, ProviderSet};

/// The bundled fixture tree: `kb/`, `mock/` and `scripts/`.
pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

pub fn script(name: &str) -> PathBuf {
    fixtures().join("scripts").join(name)
}

/// Every bundled script with its fixture key, in a fixed order.
pub fn bundled_scripts() -> Vec<PathBuf> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(fixtures().join("scripts"))
        .expect("scripts dir")
        .map(|e| e.expect("dir entry").path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
}

pub fn fixture_kb() -> KnowledgeBase {
    KnowledgeBase::ingest(
        fixtures().join("kb"),
        &ChunkingParams::default(),
        &MockEmbedder,
    )
    .expect("fixture kb ingests")
}

pub fn fixture_chat() -> MockChat {
    MockChat::from_dir(fixtures().join("mock")).expect("mock fixtures load")
}

/// Fixture chat whose every insight response cites `chunk_id`.
pub fn chat_citing(chunk_id: &str) -> MockChat {
    let body = format!(
        r#"{{"insights":[{{"text":"Advice with an invented source.","source_ids":["{chunk_id}"]}}]}}"#
    );
    let mut chat = fixture_chat();
    for tick in 1..=30 {
        for prefix in ["backpain-", "meds-", ""] {
            chat = chat.with_response("insight", format!("{prefix}t{tick}"), body.clone());
        }
    }
    chat
}

/// Engine over the fixture knowledge base with a simulated clock at 0.
pub fn engine_with(chat: Arc<dyn ChatModel>, tick_ms: u64) -> (Engine, Arc<SimClock>) {
    let clock = Arc::new(SimClock::new(0));
    let providers = ProviderSet::mock(None)
        .expect("mock providers")
        .with_chat(chat);
    let config = EngineConfig {
        tick_ms,
        ..EngineConfig::default()
    };
    let engine = Engine::new(fixture_kb(), providers, config)
        .expect("engine")
        .with_clock(clock.clone());
    (engine, clock)
}

pub fn fixture_engine(tick_ms: u64) -> (Engine, Arc<SimClock>) {
    engine_with(Arc::new(fixture_chat()), tick_ms)
}
