//! Insight generation: prompt assembly, the bounded table-query tool loop,
//! and grounding of the model's output against the retrieved hits.

use std::collections::HashSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use tracing::{debug, warn};

use super::prompts::{render, Prompts};
use super::state::{strip_to_json, ExtractedState, Insight, SourceRef};
use crate::error::{Error, Result};
use crate::index::{ChunkKind, SearchHit};
use crate::providers::{ChatModel, ResponseFormat};
use crate::query::{ColumnType, Table, TableCatalog};

pub const DEFAULT_MAX_INSIGHTS_PER_TICK: usize = 2;
pub const DEFAULT_MAX_TOOL_ROUNDS: usize = 3;

/// One round of the tool loop as it was fed back to the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub round: usize,
    pub query: String,
    pub result: String,
    pub ok: bool,
}

#[derive(Debug, Clone, Default)]
pub struct InsightOutcome {
    pub insights: Vec<Insight>,
    pub tool_calls: Vec<ToolCall>,
    /// The prompt of the final insight completion.
    pub final_prompt: String,
    /// Candidates the model proposed that failed grounding or deduplication.
    pub dropped: usize,
}

pub struct InsightRequest<'a> {
    pub state: &'a ExtractedState,
    pub hits: &'a [SearchHit],
    pub existing: &'a [Insight],
    pub query_used: &'a str,
    pub tick: u64,
    /// Fixture key for this tick, e.g. `backpain-t3`.
    pub fixture: &'a str,
}

pub struct InsightGenerator<'a> {
    pub chat: &'a dyn ChatModel,
    pub prompts: &'a Prompts,
    pub tables: &'a TableCatalog,
    pub max_insights: usize,
    pub max_tool_rounds: usize,
}

#[derive(Debug, PartialEq)]
enum ToolAction {
    Query(String),
    Done,
}

fn parse_tool_response(raw: &str) -> ToolAction {
    let value = serde_json::from_str::<Value>(raw.trim())
        .ok()
        .or_else(|| strip_to_json(raw, '{', '}').and_then(|s| serde_json::from_str(s).ok()));
    match value {
        Some(Value::Object(obj)) => match obj.get("query") {
            Some(Value::String(q)) if !q.trim().is_empty() => {
                ToolAction::Query(q.trim().to_string())
            }
            _ => ToolAction::Done,
        },
        Some(_) => ToolAction::Done,
        None => {
            let line = raw.trim().lines().next().unwrap_or("").trim();
            if line.len() >= 4 && line[..4].eq_ignore_ascii_case("from") {
                ToolAction::Query(line.to_string())
            } else {
                ToolAction::Done
            }
        }
    }
}

#[derive(Debug, Deserialize)]
struct Candidate {
    text: String,
    #[serde(default)]
    source_ids: Vec<String>,
}

fn parse_candidates(raw: &str) -> Option<Vec<Candidate>> {
    let value = serde_json::from_str::<Value>(raw.trim()).ok().or_else(|| {
        strip_to_json(raw, '{', '}')
            .or_else(|| strip_to_json(raw, '[', ']'))
            .and_then(|s| serde_json::from_str(s).ok())
    })?;
    let items = match value {
        Value::Array(items) => items,
        Value::Object(mut obj) => match obj.remove("insights") {
            Some(Value::Array(items)) => items,
            _ => return None,
        },
        _ => return None,
    };
    Some(
        items
            .into_iter()
            .filter_map(|v| serde_json::from_value(v).ok())
            .collect(),
    )
}

pub(crate) fn render_state(state: &ExtractedState) -> String {
    if state.version == 0 {
        return "(nothing extracted yet)".into();
    }
    let mut out = format!(
        "Problem: {}\n",
        state.problem.as_deref().unwrap_or("(unknown)")
    );
    out.push_str("Information:\n");
    for (k, v) in &state.info {
        out.push_str(&format!("- {k}: {v}\n"));
    }
    out.push_str("Solutions/decisions:\n");
    for s in &state.solutions {
        out.push_str(&format!("- {s}\n"));
    }
    out
}

fn render_documents(hits: &[SearchHit]) -> String {
    hits.iter()
        .map(|h| {
            let kind = match h.kind {
                ChunkKind::Text => "text",
                ChunkKind::TableDescriptor => "table",
            };
            format!(
                "[id: {}] ({kind}, {})\n{}\n",
                h.chunk_id, h.source_path, h.text
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn render_tables(tables: &[Arc<Table>]) -> String {
    tables
        .iter()
        .map(|t| {
            let cols: Vec<String> = t
                .columns
                .iter()
                .map(|c| {
                    let ty = match c.ty {
                        ColumnType::Number => "number",
                        ColumnType::Text => "text",
                    };
                    format!("{} ({ty})", c.name)
                })
                .collect();
            format!(
                "- {}: {} rows; columns {}",
                t.table_id,
                t.rows.len(),
                cols.join(", ")
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn render_tool_results(calls: &[ToolCall]) -> String {
    if calls.is_empty() {
        return "(none)".into();
    }
    calls
        .iter()
        .map(|c| format!("{} => {}", c.query, c.result))
        .collect::<Vec<_>>()
        .join("\n")
}

fn normalize(text: &str) -> String {
    text.trim().to_lowercase()
}

impl InsightGenerator<'_> {
    fn run_tool_loop(&self, req: &InsightRequest<'_>) -> Result<Vec<ToolCall>> {
        let tables: Vec<Arc<Table>> = req
            .hits
            .iter()
            .filter(|h| h.kind == ChunkKind::TableDescriptor)
            .filter_map(|h| self.tables.by_source_path(&h.source_path))
            .collect();
        let mut calls = Vec::new();
        if tables.is_empty() {
            return Ok(calls);
        }
        let allowed: HashSet<&str> = tables.iter().map(|t| t.table_id.as_str()).collect();
        let table_text = render_tables(&tables);
        let state_text = render_state(req.state);
        let mut parse_error_fed_back = false;

        for round in 1..=self.max_tool_rounds {
            let fixture = format!("{}-r{round}", req.fixture);
            let prompt = render(
                &self.prompts.tool,
                &[
                    ("fixture", &fixture),
                    ("state", &state_text),
                    ("tables", &table_text),
                    ("tool_results", &render_tool_results(&calls)),
                ],
            );
            let response = self.chat.complete(&prompt, ResponseFormat::JsonObject)?;
            let query = match parse_tool_response(&response) {
                ToolAction::Done => break,
                ToolAction::Query(q) => q,
            };
            let outcome = crate::query::parse_query(&query)
                .map_err(Error::from)
                .and_then(|parsed| {
                    if !allowed.contains(parsed.table_id.as_str()) {
                        return Err(Error::Eval(format!(
                            "table {:?} is not among the retrieved documents",
                            parsed.table_id
                        )));
                    }
                    let table = self
                        .tables
                        .get(&parsed.table_id)
                        .expect("allowed tables exist");
                    crate::query::evaluate(&parsed, &table)
                });
            match outcome {
                Ok(result) => calls.push(ToolCall {
                    round,
                    query,
                    result: result.to_string(),
                    ok: true,
                }),
                Err(Error::Parse(e)) => {
                    debug!(round, %e, "tool query failed to parse");
                    if !parse_error_fed_back {
                        parse_error_fed_back = true;
                        calls.push(ToolCall {
                            round,
                            query,
                            result: e.to_string(),
                            ok: false,
                        });
                    }
                }
                Err(e) => calls.push(ToolCall {
                    round,
                    query,
                    result: format!("error: {e}"),
                    ok: false,
                }),
            }
        }
        Ok(calls)
    }

    /// Runs the tool loop (when table descriptors were retrieved), asks for
    /// insights and keeps only those whose citations are all among `hits`.
    /// Sources are resolved from the hits, never from model output.
    pub fn generate_insights(&self, req: &InsightRequest<'_>) -> Result<InsightOutcome> {
        if req.hits.is_empty() {
            return Err(Error::InvalidInput(
                "insight generation needs at least one hit".into(),
            ));
        }
        let tool_calls = self.run_tool_loop(req)?;

        let existing_text = if req.existing.is_empty() {
            "(none)".to_string()
        } else {
            req.existing
                .iter()
                .map(|i| format!("- {}", i.text))
                .collect::<Vec<_>>()
                .join("\n")
        };
        let max = self.max_insights.to_string();
        let prompt = render(
            &self.prompts.insight,
            &[
                ("fixture", req.fixture),
                ("max_insights", &max),
                ("state", &render_state(req.state)),
                ("documents", &render_documents(req.hits)),
                ("tool_results", &render_tool_results(&tool_calls)),
                ("existing", &existing_text),
            ],
        );
        let response = self.chat.complete(&prompt, ResponseFormat::JsonObject)?;
        let candidates = parse_candidates(&response).unwrap_or_else(|| {
            warn!("insight response is not a JSON list of insights");
            Vec::new()
        });

        let mut seen: HashSet<String> = req.existing.iter().map(|i| normalize(&i.text)).collect();
        let mut insights = Vec::new();
        let mut dropped = 0;
        for candidate in candidates {
            let text = candidate.text.trim();
            let grounded = !candidate.source_ids.is_empty()
                && candidate
                    .source_ids
                    .iter()
                    .all(|id| req.hits.iter().any(|h| h.chunk_id == id.trim()));
            if text.is_empty() || !grounded || !seen.insert(normalize(text)) {
                dropped += 1;
                continue;
            }
            if insights.len() == self.max_insights {
                dropped += 1;
                continue;
            }
            let mut sources: Vec<SourceRef> = Vec::new();
            for id in &candidate.source_ids {
                let hit = req
                    .hits
                    .iter()
                    .find(|h| h.chunk_id == id.trim())
                    .expect("grounding checked above");
                if !sources.iter().any(|s| s.chunk_id == hit.chunk_id) {
                    sources.push(SourceRef {
                        chunk_id: hit.chunk_id.clone(),
                        source_path: hit.source_path.clone(),
                    });
                }
            }
            let rank = insights.len() + 1;
            insights.push(Insight {
                insight_id: format!("t{:04}-{rank}", req.tick),
                text: text.to_string(),
                sources,
                query_used: req.query_used.to_string(),
                created_tick: req.tick,
                rank,
            });
        }
        Ok(InsightOutcome {
            insights,
            tool_calls,
            final_prompt: prompt,
            dropped,
        })
    }
}
