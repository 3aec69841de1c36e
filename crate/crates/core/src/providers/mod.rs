//! Transcription, embedding and chat-completion providers.
//!
//! Each role is a trait so the pipeline can run against deterministic mocks
//! or an OpenAI-compatible HTTP endpoint. [`ProviderSet`] bundles the three
//! roles and meters every call.

mod config;
mod http;
mod mock;

use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

pub use config::{ProviderConfig, ProviderMode};
pub use http::OpenAiClient;
pub use mock::{
    mock_embed, MockChat, MockEmbedder, MockTranscriber, FIXTURE_MARKER, MOCK_EMBED_DIM,
    TASK_MARKER,
};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseFormat {
    FreeText,
    JsonObject,
}

pub trait Transcriber: Send + Sync {
    fn transcribe(&self, audio: &[u8]) -> Result<String>;
}

pub trait Embedder: Send + Sync {
    /// One vector per input text, all of the same dimension.
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>>;
}

pub trait ChatModel: Send + Sync {
    fn complete(&self, prompt: &str, format: ResponseFormat) -> Result<String>;
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UsageReport {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub audio_seconds: f64,
    pub call_count: u64,
}

impl UsageReport {
    pub fn add(&mut self, other: &UsageReport) {
        self.prompt_tokens += other.prompt_tokens;
        self.completion_tokens += other.completion_tokens;
        self.audio_seconds += other.audio_seconds;
        self.call_count += other.call_count;
    }

    /// `self - earlier`, for per-interval accounting.
    pub fn since(&self, earlier: &UsageReport) -> UsageReport {
        UsageReport {
            prompt_tokens: self.prompt_tokens - earlier.prompt_tokens,
            completion_tokens: self.completion_tokens - earlier.completion_tokens,
            audio_seconds: self.audio_seconds - earlier.audio_seconds,
            call_count: self.call_count - earlier.call_count,
        }
    }
}

/// Whitespace token count; the metering approximation used in every mode.
pub fn whitespace_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

#[derive(Debug, Default)]
pub struct UsageMeter(Mutex<UsageReport>);

impl UsageMeter {
    pub fn record(&self, delta: &UsageReport) {
        self.0.lock().unwrap_or_else(|e| e.into_inner()).add(delta);
    }

    pub fn report(&self) -> UsageReport {
        self.0.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

/// The three provider roles plus usage meters. Cloning shares providers and
/// meters; [`ProviderSet::scoped`] adds a meter that only sees calls made
/// through the returned set.
#[derive(Clone)]
pub struct ProviderSet {
    pub mode: ProviderMode,
    transcriber: Arc<dyn Transcriber>,
    embedder: Arc<dyn Embedder>,
    chat: Arc<dyn ChatModel>,
    meters: Vec<Arc<UsageMeter>>,
}

impl std::fmt::Debug for ProviderSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProviderSet")
            .field("mode", &self.mode)
            .field("usage", &self.usage())
            .finish()
    }
}

impl ProviderSet {
    pub fn new(
        mode: ProviderMode,
        transcriber: Arc<dyn Transcriber>,
        embedder: Arc<dyn Embedder>,
        chat: Arc<dyn ChatModel>,
    ) -> Self {
        ProviderSet {
            mode,
            transcriber,
            embedder,
            chat,
            meters: vec![Arc::new(UsageMeter::default())],
        }
    }

    /// Mock providers; chat responses come from `fixtures` when given.
    pub fn mock(fixtures: Option<&Path>) -> Result<Self> {
        let chat = match fixtures {
            Some(dir) => MockChat::from_dir(dir)?,
            None => MockChat::new(),
        };
        Ok(Self::new(
            ProviderMode::Mock,
            Arc::new(MockTranscriber),
            Arc::new(MockEmbedder),
            Arc::new(chat),
        ))
    }

    pub fn from_config(config: &ProviderConfig, mock_fixtures: Option<&Path>) -> Result<Self> {
        config.validate()?;
        match config.mode {
            ProviderMode::Mock => Self::mock(mock_fixtures),
            ProviderMode::Http => {
                let client = Arc::new(OpenAiClient::new(config.clone()));
                Ok(Self::new(
                    ProviderMode::Http,
                    client.clone(),
                    client.clone(),
                    client,
                ))
            }
        }
    }

    pub fn with_chat(mut self, chat: Arc<dyn ChatModel>) -> Self {
        self.chat = chat;
        self
    }

    pub fn scoped(&self) -> Self {
        let mut scoped = self.clone();
        scoped.meters.push(Arc::new(UsageMeter::default()));
        scoped
    }

    /// Usage seen by the innermost meter.
    pub fn usage(&self) -> UsageReport {
        self.meters.last().expect("at least one meter").report()
    }

    fn record(&self, delta: UsageReport) {
        for meter in &self.meters {
            meter.record(&delta);
        }
    }
}

impl Transcriber for ProviderSet {
    fn transcribe(&self, audio: &[u8]) -> Result<String> {
        let out = self.transcriber.transcribe(audio);
        self.record(UsageReport {
            completion_tokens: out.as_deref().map(whitespace_tokens).unwrap_or(0),
            call_count: 1,
            ..UsageReport::default()
        });
        out
    }
}

impl Embedder for ProviderSet {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let out = self.embedder.embed(texts);
        self.record(UsageReport {
            prompt_tokens: texts.iter().map(|t| whitespace_tokens(t)).sum(),
            call_count: 1,
            ..UsageReport::default()
        });
        out
    }
}

impl ChatModel for ProviderSet {
    fn complete(&self, prompt: &str, format: ResponseFormat) -> Result<String> {
        let out = self.chat.complete(prompt, format);
        self.record(UsageReport {
            prompt_tokens: whitespace_tokens(prompt),
            completion_tokens: out.as_deref().map(whitespace_tokens).unwrap_or(0),
            call_count: 1,
            ..UsageReport::default()
        });
        out
    }
}
