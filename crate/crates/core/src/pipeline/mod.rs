//! Per-session orchestration: cumulative transcript, tick-driven extraction,
//! retrieval and grounded insight generation.

mod clock;
mod engine;
mod insight;
mod prompts;
mod session;
mod state;

pub use clock::{Clock, SimClock, WallClock};
pub use engine::{Engine, EngineConfig, Health, SessionConfig, DEFAULT_TICK_MS};
pub use insight::{
    InsightGenerator, InsightOutcome, InsightRequest, ToolCall, DEFAULT_MAX_INSIGHTS_PER_TICK,
    DEFAULT_MAX_TOOL_ROUNDS,
};
pub use prompts::Prompts;
pub use session::{SegmentPayload, Session, SessionSettings};
pub use state::{
    compose_retrieval_query, merge_extracted, parse_extraction_response, ExtractedState,
    ExtractionDelta, Insight, SessionState, Snapshot, SourceRef, Speaker, StageLatencies,
    TickReport, TranscriptSegment,
};
