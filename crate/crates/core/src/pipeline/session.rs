use std::sync::{Arc, Mutex, MutexGuard};

use tokio::sync::watch;
use tracing::{debug, warn};

use super::clock::Clock;
use super::insight::{render_state, InsightGenerator, InsightRequest};
use super::prompts::{render, Prompts};
use super::state::{
    compose_retrieval_query, merge_extracted, parse_extraction_response, Insight, SessionState,
    Snapshot, Speaker, StageLatencies, TickReport, TranscriptSegment,
};
use crate::error::{Error, Result};
use crate::ingest::KnowledgeBase;
use crate::providers::{
    ChatModel, Embedder, ProviderSet, ResponseFormat, Transcriber, UsageReport,
};

/// Per-session tuning, fixed at creation.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionSettings {
    pub tick_ms: u64,
    pub top_k: usize,
    pub max_insights_per_tick: usize,
    pub max_tool_rounds: usize,
    /// Prefix for mock fixture keys; tick `n` uses `{prefix}-t{n}`.
    pub fixture_key: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SegmentPayload {
    Text(String),
    Audio(Vec<u8>),
}

struct Inner {
    state: SessionState,
    reports: Vec<TickReport>,
    /// Usage already attributed to a tick.
    usage_mark: UsageReport,
    /// Transcription time spent on segments not yet consumed by a tick.
    pending_transcribe_ms: u64,
}

/// What a successful pipeline pass wants to commit.
struct Staged {
    extracted: super::state::ExtractedState,
    insights: Vec<Insight>,
    changed: bool,
}

/// One conversation. Appends, ticks and finish serialize on an internal lock;
/// readers get immutable snapshots through [`Session::subscribe`] and never
/// wait on a running tick.
pub struct Session {
    id: String,
    settings: SessionSettings,
    started_at_ms: u64,
    inner: Mutex<Inner>,
    tx: watch::Sender<Arc<Snapshot>>,
    providers: ProviderSet,
    clock: Arc<dyn Clock>,
    kb: Arc<KnowledgeBase>,
    prompts: Arc<Prompts>,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("id", &self.id)
            .field("settings", &self.settings)
            .finish_non_exhaustive()
    }
}

fn transcript_text(segments: &[TranscriptSegment]) -> String {
    segments
        .iter()
        .filter(|s| s.error.is_none() && !s.text.is_empty())
        .map(|s| format!("{}: {}", s.speaker.label(), s.text))
        .collect::<Vec<_>>()
        .join("\n")
}

impl Session {
    pub(crate) fn new(
        id: String,
        settings: SessionSettings,
        providers: ProviderSet,
        clock: Arc<dyn Clock>,
        kb: Arc<KnowledgeBase>,
        prompts: Arc<Prompts>,
    ) -> Self {
        let started_at_ms = clock.now_ms();
        let state = SessionState::new(id.clone(), started_at_ms);
        let (tx, _) = watch::channel(Arc::new(state.snapshot()));
        Session {
            id,
            settings,
            started_at_ms,
            inner: Mutex::new(Inner {
                state,
                reports: Vec::new(),
                usage_mark: UsageReport::default(),
                pending_transcribe_ms: 0,
            }),
            tx,
            providers,
            clock,
            kb,
            prompts,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn settings(&self) -> &SessionSettings {
        &self.settings
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn publish(&self, inner: &mut Inner) {
        inner.state.snapshot_version += 1;
        self.tx.send_replace(Arc::new(inner.state.snapshot()));
    }

    /// Latest published snapshot.
    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.tx.borrow().clone()
    }

    /// A receiver that always holds the latest snapshot. Slow receivers
    /// simply skip versions.
    pub fn subscribe(&self) -> watch::Receiver<Arc<Snapshot>> {
        self.tx.subscribe()
    }

    pub fn state(&self) -> SessionState {
        self.lock().state.clone()
    }

    pub fn reports(&self) -> Vec<TickReport> {
        self.lock().reports.clone()
    }

    /// All provider usage made on behalf of this session.
    pub fn usage(&self) -> UsageReport {
        self.providers.usage()
    }

    pub fn started_at_ms(&self) -> u64 {
        self.started_at_ms
    }

    /// Reads the published snapshot, so it never waits on a running tick.
    pub fn is_finished(&self) -> bool {
        self.tx.borrow().finished
    }

    /// When the next tick falls due, per the published tick count.
    pub fn next_tick_due_ms(&self) -> u64 {
        self.started_at_ms + (self.tx.borrow().tick_count + 1) * self.settings.tick_ms
    }

    /// Appends one utterance. Audio is transcribed first; a transcription
    /// failure still stores the segment, with empty text and the error.
    pub fn append_segment(
        &self,
        speaker: Speaker,
        payload: SegmentPayload,
        offset_ms: u64,
    ) -> Result<u64> {
        let mut inner = self.lock();
        if inner.state.finished {
            return Err(Error::SessionFinished(self.id.clone()));
        }
        if let Some(last) = inner.state.transcript.last() {
            if offset_ms < last.offset_ms {
                return Err(Error::InvalidInput(format!(
                    "offset_ms {offset_ms} is before the previous segment's {}",
                    last.offset_ms
                )));
            }
        }
        let (text, error) = match payload {
            SegmentPayload::Text(text) => (text.trim().to_string(), None),
            SegmentPayload::Audio(bytes) => {
                let started = self.clock.now_ms();
                let out = self.providers.transcribe(&bytes);
                inner.pending_transcribe_ms += self.clock.now_ms().saturating_sub(started);
                match out {
                    Ok(text) => (text.trim().to_string(), None),
                    Err(e) => {
                        warn!(session = %self.id, %e, "transcription failed");
                        (String::new(), Some(e.to_string()))
                    }
                }
            }
        };
        let seq = inner.state.transcript.len() as u64;
        inner.state.transcript.push(TranscriptSegment {
            seq,
            speaker,
            text,
            offset_ms,
            error,
        });
        self.publish(&mut inner);
        Ok(seq)
    }

    /// Runs the tick that is due at or before `now_ms`.
    pub fn run_tick(&self, now_ms: u64) -> Result<TickReport> {
        let mut inner = self.lock();
        if inner.state.finished {
            return Err(Error::SessionFinished(self.id.clone()));
        }
        let due_ms =
            inner.state.started_at_ms + (inner.state.tick_count + 1) * self.settings.tick_ms;
        if now_ms < due_ms {
            return Err(Error::TickTooEarly { now_ms, due_ms });
        }
        Ok(self.tick_locked(&mut inner, due_ms))
    }

    /// Runs every tick due at or before `now_ms`, in order.
    pub fn advance_to(&self, now_ms: u64) -> Result<Vec<TickReport>> {
        let mut inner = self.lock();
        if inner.state.finished {
            return Err(Error::SessionFinished(self.id.clone()));
        }
        let mut out = Vec::new();
        loop {
            let due_ms =
                inner.state.started_at_ms + (inner.state.tick_count + 1) * self.settings.tick_ms;
            if now_ms < due_ms {
                return Ok(out);
            }
            out.push(self.tick_locked(&mut inner, due_ms));
        }
    }

    fn tick_locked(&self, inner: &mut Inner, at_ms: u64) -> TickReport {
        let tick_index = inner.state.tick_count + 1;
        let start = inner.state.last_consumed_seq.map_or(0, |s| s + 1) as usize;
        let new_segments = inner.state.transcript.len().saturating_sub(start);
        let mut report = TickReport {
            tick_index,
            at_ms,
            new_segments_consumed: new_segments,
            ..TickReport::default()
        };

        if new_segments == 0 {
            report.skipped = true;
            report.skip_reason = Some("no new transcript segments".into());
        } else {
            report.stage_latencies_ms.transcribe_pending = inner.pending_transcribe_ms;
            let mut latencies = report.stage_latencies_ms;
            match self.pipeline(&inner.state, tick_index, &mut latencies) {
                Ok(staged) => {
                    report.extraction_changed = staged.changed;
                    report.insights_generated = staged.insights.len();
                    inner.state.extracted = staged.extracted;
                    let mut insights = staged.insights;
                    insights.append(&mut inner.state.insights);
                    inner.state.insights = insights;
                    inner.state.last_consumed_seq = Some(inner.state.transcript.len() as u64 - 1);
                    inner.pending_transcribe_ms = 0;
                }
                Err(e) => {
                    warn!(session = %self.id, tick = tick_index, %e, "tick aborted");
                    report.error = Some(e.to_string());
                }
            }
            report.stage_latencies_ms = latencies;
        }

        inner.state.tick_count = tick_index;
        self.publish(inner);
        let usage = self.providers.usage();
        report.usage = usage.since(&inner.usage_mark);
        inner.usage_mark = usage;
        debug!(session = %self.id, ?report, "tick done");
        inner.reports.push(report.clone());
        report
    }

    fn fixture(&self, tick: u64) -> String {
        match &self.settings.fixture_key {
            Some(prefix) => format!("{prefix}-t{tick}"),
            None => format!("t{tick}"),
        }
    }

    /// Extraction, retrieval and insight generation, staged on copies.
    fn pipeline(
        &self,
        state: &SessionState,
        tick: u64,
        latencies: &mut StageLatencies,
    ) -> Result<Staged> {
        let fixture = self.fixture(tick);

        let t0 = self.clock.now_ms();
        let prompt = render(
            &self.prompts.extract,
            &[
                ("fixture", &fixture),
                ("state", &render_state(&state.extracted)),
                ("transcript", &transcript_text(&state.transcript)),
            ],
        );
        let raw = self.providers.complete(&prompt, ResponseFormat::JsonObject);
        let delta = raw.and_then(|r| parse_extraction_response(&r));
        latencies.extract = self.clock.now_ms().saturating_sub(t0);
        let extracted = merge_extracted(&state.extracted, &delta?);
        let changed = extracted.version != state.extracted.version;
        if !changed {
            return Ok(Staged {
                extracted,
                insights: Vec::new(),
                changed,
            });
        }

        let t1 = self.clock.now_ms();
        let retrieved = compose_retrieval_query(&extracted).and_then(|query| {
            let mut vectors = self.providers.embed(std::slice::from_ref(&query))?;
            let vector = vectors
                .pop()
                .ok_or_else(|| Error::provider(None, "embedder returned no vector"))?;
            let hits = self.kb.index.search(&vector, self.settings.top_k)?;
            Ok((query, hits))
        });
        latencies.retrieve = self.clock.now_ms().saturating_sub(t1);
        let (query, hits) = retrieved?;
        if hits.is_empty() {
            return Ok(Staged {
                extracted,
                insights: Vec::new(),
                changed,
            });
        }

        let t2 = self.clock.now_ms();
        let generator = InsightGenerator {
            chat: &self.providers as &dyn ChatModel,
            prompts: &self.prompts,
            tables: &self.kb.tables,
            max_insights: self.settings.max_insights_per_tick,
            max_tool_rounds: self.settings.max_tool_rounds,
        };
        let outcome = generator.generate_insights(&InsightRequest {
            state: &extracted,
            hits: &hits,
            existing: &state.insights,
            query_used: &query,
            tick,
            fixture: &fixture,
        });
        latencies.generate = self.clock.now_ms().saturating_sub(t2);
        let outcome = outcome?;
        if outcome.dropped > 0 {
            debug!(session = %self.id, tick, dropped = outcome.dropped, "ungrounded or duplicate insights dropped");
        }
        Ok(Staged {
            extracted,
            insights: outcome.insights,
            changed,
        })
    }

    /// Freezes the session. Finishing twice returns the same snapshot.
    pub fn finish(&self) -> Arc<Snapshot> {
        let mut inner = self.lock();
        if !inner.state.finished {
            inner.state.finished = true;
            self.publish(&mut inner);
        }
        self.snapshot()
    }
}
