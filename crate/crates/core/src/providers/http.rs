use std::time::Duration;

use serde::Deserialize;
use serde_json::json;
use tracing::warn;

use super::{ChatModel, Embedder, ProviderConfig, ResponseFormat, Transcriber};
use crate::error::{Error, Result};

const BOUNDARY: &str = "ainsight-multipart-boundary-7d3f9a";

/// Client for OpenAI-compatible `/v1/chat/completions`, `/v1/embeddings`
/// and `/v1/audio/transcriptions` endpoints. Failed requests (transport
/// errors, 429, 5xx) are attempted once more.
pub struct OpenAiClient {
    config: ProviderConfig,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    index: usize,
    embedding: Vec<f64>,
}

#[derive(Deserialize)]
struct TranscriptionResponse {
    text: String,
}

enum Body {
    Json(serde_json::Value),
    Multipart(Vec<u8>),
}

impl OpenAiClient {
    pub fn new(config: ProviderConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        OpenAiClient { config, agent }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.config.base_url.trim_end_matches('/'), path)
    }

    fn post_once(&self, path: &str, body: &Body) -> Result<String> {
        let request = self
            .agent
            .post(&self.url(path))
            .header("Authorization", &format!("Bearer {}", self.config.api_key));
        let response = match body {
            Body::Json(value) => request.send_json(value),
            Body::Multipart(bytes) => request
                .header(
                    "Content-Type",
                    &format!("multipart/form-data; boundary={BOUNDARY}"),
                )
                .send(&bytes[..]),
        };
        let mut response = response.map_err(|e| Error::provider(None, e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| Error::provider(Some(status), e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(Error::provider(Some(status), text));
        }
        Ok(text)
    }

    fn post(&self, path: &str, body: Body) -> Result<String> {
        match self.post_once(path, &body) {
            Err(Error::Provider { status, message })
                if status.is_none_or(|s| s == 429 || s >= 500) =>
            {
                warn!(path, ?status, %message, "provider request failed, retrying once");
                self.post_once(path, &body)
            }
            other => other,
        }
    }

    fn decode<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
        serde_json::from_str(text)
            .map_err(|e| Error::provider(None, format!("unexpected response body: {e}")))
    }
}

impl ChatModel for OpenAiClient {
    fn complete(&self, prompt: &str, format: ResponseFormat) -> Result<String> {
        if prompt.trim().is_empty() {
            return Err(Error::InvalidInput("empty prompt".into()));
        }
        let mut body = json!({
            "model": self.config.chat_model,
            "messages": [{"role": "user", "content": prompt}],
        });
        if format == ResponseFormat::JsonObject {
            body["response_format"] = json!({"type": "json_object"});
        }
        let text = self.post("/v1/chat/completions", Body::Json(body))?;
        let parsed: ChatResponse = Self::decode(&text)?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| Error::provider(None, "chat response has no content"))
    }
}

impl Embedder for OpenAiClient {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        if let Some(i) = texts.iter().position(String::is_empty) {
            return Err(Error::InvalidInput(format!(
                "text {i} in embedding batch is empty"
            )));
        }
        let body = json!({"model": self.config.embed_model, "input": texts});
        let text = self.post("/v1/embeddings", Body::Json(body))?;
        let mut parsed: EmbeddingResponse = Self::decode(&text)?;
        parsed.data.sort_by_key(|d| d.index);
        if parsed.data.len() != texts.len() {
            return Err(Error::provider(
                None,
                format!(
                    "expected {} embeddings, got {}",
                    texts.len(),
                    parsed.data.len()
                ),
            ));
        }
        Ok(parsed.data.into_iter().map(|d| d.embedding).collect())
    }
}

impl Transcriber for OpenAiClient {
    fn transcribe(&self, audio: &[u8]) -> Result<String> {
        if audio.is_empty() {
            return Err(Error::InvalidInput("empty audio payload".into()));
        }
        let mut body = Vec::with_capacity(audio.len() + 512);
        body.extend_from_slice(
            format!(
                "--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"model\"\r\n\r\n{}\r\n",
                self.config.transcribe_model
            )
            .as_bytes(),
        );
        body.extend_from_slice(
            format!(
                "--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"segment.wav\"\r\nContent-Type: application/octet-stream\r\n\r\n"
            )
            .as_bytes(),
        );
        body.extend_from_slice(audio);
        body.extend_from_slice(format!("\r\n--{BOUNDARY}--\r\n").as_bytes());
        let text = self.post("/v1/audio/transcriptions", Body::Multipart(body))?;
        let parsed: TranscriptionResponse = Self::decode(&text)?;
        Ok(parsed.text)
    }
}
