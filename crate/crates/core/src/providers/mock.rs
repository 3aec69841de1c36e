use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{ChatModel, Embedder, ResponseFormat, Transcriber};
use crate::error::{Error, Result};

pub const MOCK_EMBED_DIM: usize = 256;

/// Marker line naming the pipeline task a prompt belongs to.
pub const TASK_MARKER: &str = "#TASK:";
/// Marker line carrying the fixture key for mock lookups.
pub const FIXTURE_MARKER: &str = "#FIXTURE:";

/// Scripts carry text, so mock transcription decodes the payload as UTF-8.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockTranscriber;

impl Transcriber for MockTranscriber {
    fn transcribe(&self, audio: &[u8]) -> Result<String> {
        if audio.is_empty() {
            return Err(Error::InvalidInput("empty audio payload".into()));
        }
        String::from_utf8(audio.to_vec())
            .map_err(|_| Error::InvalidInput("mock transcription expects UTF-8 text".into()))
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Hashed bag-of-words embedding: lowercase, split on non-alphanumerics,
/// FNV-1a each token into one of 256 buckets, L2-normalise. Text without any
/// alphanumeric token hashes as a single raw token.
pub fn mock_embed(text: &str) -> Vec<f64> {
    let lower = text.to_lowercase();
    let mut counts = vec![0.0f64; MOCK_EMBED_DIM];
    let mut any = false;
    for token in lower
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
    {
        counts[(fnv1a(token.as_bytes()) % MOCK_EMBED_DIM as u64) as usize] += 1.0;
        any = true;
    }
    if !any {
        counts[(fnv1a(lower.as_bytes()) % MOCK_EMBED_DIM as u64) as usize] = 1.0;
    }
    let norm = counts.iter().map(|x| x * x).sum::<f64>().sqrt();
    counts.iter_mut().for_each(|x| *x /= norm);
    counts
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MockEmbedder;

impl Embedder for MockEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        if let Some(i) = texts.iter().position(String::is_empty) {
            return Err(Error::InvalidInput(format!(
                "text {i} in embedding batch is empty"
            )));
        }
        Ok(texts.iter().map(|t| mock_embed(t)).collect())
    }
}

/// Canned chat responses keyed by `(task, fixture key)`.
///
/// Prompts name their task with a `#TASK:<task>` line and their fixture with
/// a `#FIXTURE:<key>` line. On disk, each response is a file named
/// `<task>.<key>.json` whose bytes are returned verbatim. Unknown keys get
/// the task's default: `{}` for `extract`, `{"insights":[]}` for `insight`,
/// `{"done":true}` for `tool`, `{}` otherwise.
#[derive(Debug, Clone, Default)]
pub struct MockChat {
    responses: BTreeMap<(String, String), String>,
}

impl MockChat {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut chat = MockChat::new();
        let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            let Some(stem) = name.strip_suffix(".json") else {
                continue;
            };
            let Some((task, key)) = stem.split_once('.') else {
                continue;
            };
            let body = fs::read_to_string(entry.path()).map_err(|e| Error::io(entry.path(), e))?;
            chat.responses
                .insert((task.to_string(), key.to_string()), body);
        }
        Ok(chat)
    }

    pub fn with_response(
        mut self,
        task: impl Into<String>,
        key: impl Into<String>,
        body: impl Into<String>,
    ) -> Self {
        self.responses
            .insert((task.into(), key.into()), body.into());
        self
    }

    pub fn default_response(task: &str) -> &'static str {
        match task {
            "insight" => r#"{"insights":[]}"#,
            "tool" => r#"{"done":true}"#,
            _ => "{}",
        }
    }

    fn marker<'a>(prompt: &'a str, marker: &str) -> Option<&'a str> {
        prompt
            .lines()
            .find_map(|l| l.trim().strip_prefix(marker))
            .map(str::trim)
    }
}

impl ChatModel for MockChat {
    fn complete(&self, prompt: &str, _format: ResponseFormat) -> Result<String> {
        if prompt.trim().is_empty() {
            return Err(Error::InvalidInput("empty prompt".into()));
        }
        let task = Self::marker(prompt, TASK_MARKER).unwrap_or("");
        let key = Self::marker(prompt, FIXTURE_MARKER).unwrap_or("");
        Ok(self
            .responses
            .get(&(task.to_string(), key.to_string()))
            .cloned()
            .unwrap_or_else(|| Self::default_response(task).to_string()))
    }
}
