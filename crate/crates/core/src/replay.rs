//! Scripted dialogue replay against an [`Engine`], on a simulated or wall
//! clock, producing per-tick metrics.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use tracing::info;

use crate::error::{Error, Result};
use crate::pipeline::{
    Clock, Engine, SegmentPayload, Session, SessionConfig, SimClock, Snapshot, Speaker, TickReport,
    WallClock,
};
use crate::providers::{ProviderMode, UsageReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScriptSpeaker {
    Doctor,
    Patient,
}

impl From<ScriptSpeaker> for Speaker {
    fn from(s: ScriptSpeaker) -> Self {
        match s {
            ScriptSpeaker::Doctor => Speaker::Doctor,
            ScriptSpeaker::Patient => Speaker::Patient,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: ScriptSpeaker,
    pub text: String,
    pub at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueScript {
    pub title: String,
    /// Total length of the replay; defaults to the last turn's `at_ms`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_ms: Option<u64>,
    /// Mock fixture prefix used when the replay options name none.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture_key: Option<String>,
    pub turns: Vec<Turn>,
}

impl DialogueScript {
    pub fn validate(&self) -> Result<()> {
        if self.turns.is_empty() {
            return Err(Error::ScriptValidation {
                turn: 0,
                message: "script has no turns".into(),
            });
        }
        for (i, pair) in self.turns.windows(2).enumerate() {
            if pair[1].at_ms < pair[0].at_ms {
                return Err(Error::ScriptValidation {
                    turn: i + 1,
                    message: format!(
                        "at_ms {} is earlier than the previous turn's {}",
                        pair[1].at_ms, pair[0].at_ms
                    ),
                });
            }
        }
        if let Some((i, _)) = self
            .turns
            .iter()
            .enumerate()
            .find(|(_, t)| t.text.trim().is_empty())
        {
            return Err(Error::ScriptValidation {
                turn: i,
                message: "turn text is empty".into(),
            });
        }
        if let Some(d) = self.duration_ms {
            let last = self.turns.last().map_or(0, |t| t.at_ms);
            if d < last {
                return Err(Error::ScriptValidation {
                    turn: self.turns.len() - 1,
                    message: format!("turn at {last} ms is after duration_ms {d}"),
                });
            }
        }
        Ok(())
    }

    pub fn span_ms(&self) -> u64 {
        self.duration_ms
            .unwrap_or_else(|| self.turns.last().map_or(0, |t| t.at_ms))
    }
}

/// Reads and validates a JSON dialogue script.
pub fn load_script(path: impl AsRef<Path>) -> Result<DialogueScript> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let script: DialogueScript = serde_json::from_str(&text)?;
    script.validate()?;
    Ok(script)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockKind {
    Sim,
    Wall,
}

impl FromStr for ClockKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sim" => Ok(ClockKind::Sim),
            "wall" => Ok(ClockKind::Wall),
            other => Err(Error::Config(format!(
                "unknown clock {other:?} (expected sim or wall)"
            ))),
        }
    }
}

impl fmt::Display for ClockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClockKind::Sim => "sim",
            ClockKind::Wall => "wall",
        })
    }
}

#[derive(Debug, Clone)]
pub struct ReplayOptions {
    pub speed: f64,
    pub clock: ClockKind,
    pub session_id: Option<String>,
    pub fixture_key: Option<String>,
}

impl Default for ReplayOptions {
    fn default() -> Self {
        ReplayOptions {
            speed: 1.0,
            clock: ClockKind::Sim,
            session_id: None,
            fixture_key: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplayTotals {
    pub ticks: usize,
    pub skipped_ticks: usize,
    pub failed_ticks: usize,
    pub insights: usize,
    pub extraction_changes: usize,
    pub usage: UsageReport,
}

impl ReplayTotals {
    pub fn from_ticks(ticks: &[TickReport]) -> Self {
        let mut totals = ReplayTotals {
            ticks: ticks.len(),
            ..ReplayTotals::default()
        };
        for t in ticks {
            totals.skipped_ticks += t.skipped as usize;
            totals.failed_ticks += t.error.is_some() as usize;
            totals.insights += t.insights_generated;
            totals.extraction_changes += t.extraction_changed as usize;
            totals.usage.add(&t.usage);
        }
        totals
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayMetrics {
    pub script_title: String,
    pub clock: ClockKind,
    pub speed: f64,
    pub tick_ms: u64,
    pub turns_submitted: usize,
    pub ticks: Vec<TickReport>,
    /// Sums over `ticks`.
    pub totals: ReplayTotals,
    /// Everything the session used, including transcription after the last tick.
    pub session_usage: UsageReport,
    /// Elapsed replay time; simulated milliseconds on the simulated clock.
    pub wall_time_ms: u64,
}

#[derive(Debug, Clone)]
pub struct ReplayOutcome {
    pub metrics: ReplayMetrics,
    pub snapshot: Arc<Snapshot>,
}

/// An engine error raised mid-replay, with whatever was measured so far.
#[derive(Debug)]
pub struct ReplayFailure {
    pub error: Error,
    pub partial: Option<Box<ReplayMetrics>>,
}

impl fmt::Display for ReplayFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "replay failed: {}", self.error)
    }
}

impl std::error::Error for ReplayFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<Error> for ReplayFailure {
    fn from(error: Error) -> Self {
        ReplayFailure {
            error,
            partial: None,
        }
    }
}

struct Run<'a> {
    script: &'a DialogueScript,
    opts: &'a ReplayOptions,
    session: &'a Session,
    turns_submitted: usize,
    started: Instant,
    t0: u64,
}

impl Run<'_> {
    fn metrics(&self, end_ms: u64) -> ReplayMetrics {
        let ticks = self.session.reports();
        let wall_time_ms = match self.opts.clock {
            ClockKind::Sim => end_ms.saturating_sub(self.t0),
            ClockKind::Wall => self.started.elapsed().as_millis() as u64,
        };
        ReplayMetrics {
            script_title: self.script.title.clone(),
            clock: self.opts.clock,
            speed: self.opts.speed,
            tick_ms: self.session.settings().tick_ms,
            turns_submitted: self.turns_submitted,
            totals: ReplayTotals::from_ticks(&ticks),
            ticks,
            session_usage: self.session.usage(),
            wall_time_ms,
        }
    }

    fn fail(&self, error: Error) -> ReplayFailure {
        let now = self.session.clock().now_ms();
        ReplayFailure {
            error,
            partial: Some(Box::new(self.metrics(now))),
        }
    }
}

/// Plays `script` into a fresh session. Turn `i` is submitted at
/// `at_ms / speed`; ticks fire on the session clock at the engine's cadence,
/// after any turns that land on the same instant. The session is finished at
/// the end of the script span.
pub fn run_replay(
    script: &DialogueScript,
    engine: &Engine,
    opts: &ReplayOptions,
) -> std::result::Result<ReplayOutcome, ReplayFailure> {
    script.validate()?;
    if !(opts.speed.is_finite() && opts.speed > 0.0) {
        return Err(Error::Config(format!(
            "speed must be a positive number, got {}",
            opts.speed
        ))
        .into());
    }
    let clock: Arc<dyn Clock> = match opts.clock {
        ClockKind::Sim => Arc::new(SimClock::new(0)),
        ClockKind::Wall => Arc::new(WallClock),
    };
    let session = engine.create_session(SessionConfig {
        session_id: opts.session_id.clone(),
        fixture_key: opts
            .fixture_key
            .clone()
            .or_else(|| script.fixture_key.clone()),
        clock: Some(clock.clone()),
    })?;
    let t0 = session.state().started_at_ms;
    let scaled = |ms: u64| t0 + (ms as f64 / opts.speed).round() as u64;
    let end_ms = scaled(script.span_ms());
    // Mock transcription is the identity on UTF-8, so text goes through it
    // as audio; a real transcription endpoint gets the text directly.
    let as_audio = engine.providers().mode == ProviderMode::Mock;

    let mut run = Run {
        script,
        opts,
        session: &session,
        turns_submitted: 0,
        started: Instant::now(),
        t0,
    };
    info!(title = %script.title, session = session.id(), clock = %opts.clock, speed = opts.speed, "replay started");

    let mut turns = script.turns.iter().peekable();
    loop {
        let tick_due = session.next_tick_due_ms();
        match turns.peek() {
            Some(turn) if scaled(turn.at_ms) <= tick_due => {
                clock.sleep_until(scaled(turn.at_ms));
                let payload = if as_audio {
                    SegmentPayload::Audio(turn.text.clone().into_bytes())
                } else {
                    SegmentPayload::Text(turn.text.clone())
                };
                session
                    .append_segment(turn.speaker.into(), payload, turn.at_ms)
                    .map_err(|e| run.fail(e))?;
                run.turns_submitted += 1;
                turns.next();
            }
            _ if tick_due <= end_ms => {
                clock.sleep_until(tick_due);
                session.run_tick(tick_due).map_err(|e| run.fail(e))?;
            }
            _ => break,
        }
    }
    clock.sleep_until(end_ms);
    let snapshot = session.finish();
    let metrics = run.metrics(end_ms);
    info!(
        ticks = metrics.totals.ticks,
        insights = metrics.totals.insights,
        "replay finished"
    );
    Ok(ReplayOutcome { metrics, snapshot })
}

/// Writes metrics as pretty-printed JSON.
pub fn export_metrics(metrics: &ReplayMetrics, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(metrics)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_metrics(path: impl AsRef<Path>) -> Result<ReplayMetrics> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
