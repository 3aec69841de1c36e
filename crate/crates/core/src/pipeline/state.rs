use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::providers::UsageReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    Doctor,
    Patient,
    Unknown,
}

impl Speaker {
    pub fn label(self) -> &'static str {
        match self {
            Speaker::Doctor => "Doctor",
            Speaker::Patient => "Patient",
            Speaker::Unknown => "Speaker",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptSegment {
    pub seq: u64,
    pub speaker: Speaker,
    pub text: String,
    pub offset_ms: u64,
    /// Set when transcription failed; `text` is empty then.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// What the conversation is about so far.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExtractedState {
    pub problem: Option<String>,
    pub info: IndexMap<String, String>,
    pub solutions: Vec<String>,
    pub version: u64,
}

/// A partial [`ExtractedState`] as returned by the extraction model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExtractionDelta {
    pub problem: Option<String>,
    pub info: IndexMap<String, String>,
    pub solutions: Vec<String>,
}

fn same_solution(a: &str, b: &str) -> bool {
    a.trim().to_lowercase() == b.trim().to_lowercase()
}

/// Folds `delta` into `state`.
///
/// A non-empty problem replaces the current one; info keys are upserted (new
/// keys append, existing keys keep their position); solutions append unless a
/// case-insensitive duplicate exists. The version is bumped only when
/// something changed, which makes the merge idempotent.
pub fn merge_extracted(state: &ExtractedState, delta: &ExtractionDelta) -> ExtractedState {
    let mut next = state.clone();
    let mut changed = false;

    if let Some(problem) = delta.problem.as_deref().map(str::trim) {
        if !problem.is_empty() && next.problem.as_deref() != Some(problem) {
            next.problem = Some(problem.to_string());
            changed = true;
        }
    }
    // keys that collide after trimming: last one wins
    let mut info: IndexMap<&str, &str> = IndexMap::new();
    for (key, value) in &delta.info {
        let (key, value) = (key.trim(), value.trim());
        if !key.is_empty() && !value.is_empty() {
            info.insert(key, value);
        }
    }
    for (key, value) in info {
        if next.info.get(key).map(String::as_str) != Some(value) {
            next.info.insert(key.to_string(), value.to_string());
            changed = true;
        }
    }
    for solution in &delta.solutions {
        let solution = solution.trim();
        if solution.is_empty() || next.solutions.iter().any(|s| same_solution(s, solution)) {
            continue;
        }
        next.solutions.push(solution.to_string());
        changed = true;
    }

    if changed {
        next.version += 1;
    }
    next
}

fn scalar_to_string(value: &Value) -> Option<String> {
    match value {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

/// Slices `raw` from its first `open` to its last `close`, dropping any
/// prose the model wrapped around the JSON.
pub(crate) fn strip_to_json(raw: &str, open: char, close: char) -> Option<&str> {
    let start = raw.find(open)?;
    let end = raw.rfind(close)?;
    (end > start).then(|| &raw[start..=end])
}

/// Parses an extraction response: a JSON object with optional `problem`
/// (string), `info` (object of strings) and `solutions` (array of strings).
/// Unknown fields are ignored. A single repair pass strips text before the
/// first `{` and after the last `}`.
pub fn parse_extraction_response(raw: &str) -> Result<ExtractionDelta> {
    let value: Value = match serde_json::from_str(raw.trim()) {
        Ok(v) => v,
        Err(first) => {
            let repaired = strip_to_json(raw, '{', '}')
                .ok_or_else(|| Error::ExtractionParse(first.to_string()))?;
            serde_json::from_str(repaired).map_err(|e| Error::ExtractionParse(e.to_string()))?
        }
    };
    let Value::Object(object) = value else {
        return Err(Error::ExtractionParse(
            "response is not a JSON object".into(),
        ));
    };

    let mut delta = ExtractionDelta::default();
    match object.get("problem") {
        None | Some(Value::Null) => {}
        Some(Value::String(s)) => delta.problem = Some(s.clone()),
        Some(other) => {
            return Err(Error::ExtractionParse(format!(
                "problem must be a string, got {other}"
            )))
        }
    }
    match object.get("info") {
        None | Some(Value::Null) => {}
        Some(Value::Object(info)) => {
            for (k, v) in info {
                if let Some(v) = scalar_to_string(v) {
                    delta.info.insert(k.clone(), v);
                }
            }
        }
        Some(other) => {
            return Err(Error::ExtractionParse(format!(
                "info must be an object, got {other}"
            )))
        }
    }
    match object.get("solutions") {
        None | Some(Value::Null) => {}
        Some(Value::Array(items)) => {
            delta.solutions = items.iter().filter_map(scalar_to_string).collect();
        }
        Some(other) => {
            return Err(Error::ExtractionParse(format!(
                "solutions must be an array, got {other}"
            )))
        }
    }
    Ok(delta)
}

/// Problem, then `key: value` pairs in map order, then solutions, joined by
/// single spaces.
pub fn compose_retrieval_query(state: &ExtractedState) -> Result<String> {
    if state.version == 0 {
        return Err(Error::NoQuery);
    }
    let mut parts: Vec<String> = Vec::new();
    if let Some(problem) = &state.problem {
        parts.push(problem.clone());
    }
    parts.extend(state.info.iter().map(|(k, v)| format!("{k}: {v}")));
    parts.extend(state.solutions.iter().cloned());
    let query = parts.join(" ");
    if query.trim().is_empty() {
        return Err(Error::NoQuery);
    }
    Ok(query)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceRef {
    pub chunk_id: String,
    pub source_path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Insight {
    pub insight_id: String,
    pub text: String,
    pub sources: Vec<SourceRef>,
    pub query_used: String,
    pub created_tick: u64,
    pub rank: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageLatencies {
    pub transcribe_pending: u64,
    pub extract: u64,
    pub retrieve: u64,
    pub generate: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TickReport {
    /// 1-based.
    pub tick_index: u64,
    pub at_ms: u64,
    pub new_segments_consumed: usize,
    pub extraction_changed: bool,
    pub insights_generated: usize,
    pub stage_latencies_ms: StageLatencies,
    pub skipped: bool,
    pub skip_reason: Option<String>,
    pub error: Option<String>,
    /// Provider usage incurred during this tick.
    pub usage: UsageReport,
}

/// Full mutable state of one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub started_at_ms: u64,
    pub transcript: Vec<TranscriptSegment>,
    pub extracted: ExtractedState,
    /// Newest first.
    pub insights: Vec<Insight>,
    pub last_consumed_seq: Option<u64>,
    pub tick_count: u64,
    pub finished: bool,
    pub snapshot_version: u64,
}

impl SessionState {
    pub fn new(session_id: String, started_at_ms: u64) -> Self {
        SessionState {
            session_id,
            started_at_ms,
            transcript: Vec::new(),
            extracted: ExtractedState::default(),
            insights: Vec::new(),
            last_consumed_seq: None,
            tick_count: 0,
            finished: false,
            snapshot_version: 0,
        }
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            session_id: self.session_id.clone(),
            snapshot_version: self.snapshot_version,
            transcript: self.transcript.clone(),
            extracted: self.extracted.clone(),
            insights: self.insights.clone(),
            finished: self.finished,
            tick_count: self.tick_count,
        }
    }
}

/// Immutable, versioned copy of a session handed to clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub session_id: String,
    pub snapshot_version: u64,
    pub transcript: Vec<TranscriptSegment>,
    pub extracted: ExtractedState,
    pub insights: Vec<Insight>,
    pub finished: bool,
    pub tick_count: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn delta(problem: Option<&str>, info: &[(&str, &str)], solutions: &[&str]) -> ExtractionDelta {
        ExtractionDelta {
            problem: problem.map(str::to_string),
            info: info
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
            solutions: solutions.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn problem_sets_version_one() {
        let s = merge_extracted(
            &ExtractedState::default(),
            &delta(Some("Lower back pain for the past month"), &[], &[]),
        );
        assert_eq!(
            s.problem.as_deref(),
            Some("Lower back pain for the past month")
        );
        assert_eq!(s.version, 1);
    }

    #[test]
    fn solutions_dedupe_case_insensitively() {
        let s = merge_extracted(&ExtractedState::default(), &delta(None, &[], &["Imaging"]));
        let t = merge_extracted(&s, &delta(None, &[], &["  imaging "]));
        assert_eq!(t, s);
    }

    #[test]
    fn info_upserts_in_place() {
        let s = merge_extracted(
            &ExtractedState::default(),
            &delta(
                None,
                &[("duration", "week"), ("location", "lower back")],
                &[],
            ),
        );
        let t = merge_extracted(
            &s,
            &delta(
                None,
                &[("duration", "past month"), ("job", "factory worker")],
                &[],
            ),
        );
        let keys: Vec<_> = t.info.keys().map(String::as_str).collect();
        assert_eq!(keys, ["duration", "location", "job"]);
        assert_eq!(t.info["duration"], "past month");
        assert_eq!(t.version, 2);
    }

    #[test]
    fn empty_values_do_not_count_as_change() {
        let s = merge_extracted(
            &ExtractedState::default(),
            &delta(Some("  "), &[("k", "")], &[""]),
        );
        assert_eq!(s, ExtractedState::default());
    }

    #[test]
    fn parse_plain_and_repaired() {
        let d = parse_extraction_response(r#"{"info":{"pain_type":"dull and achy"}}"#).unwrap();
        assert_eq!(d.info.len(), 1);
        assert_eq!(d.info["pain_type"], "dull and achy");

        let d = parse_extraction_response(r#"Sure! Here it is: {"solutions":["Physiotherapy"]}"#)
            .unwrap();
        assert_eq!(d.solutions, ["Physiotherapy"]);

        assert!(matches!(
            parse_extraction_response("not json at all"),
            Err(Error::ExtractionParse(_))
        ));
    }

    #[test]
    fn parse_ignores_unknown_and_rejects_wrong_types() {
        let d = parse_extraction_response(r#"{"mood":"calm","info":{"age":42,"x":null}}"#).unwrap();
        assert_eq!(d.info["age"], "42");
        assert!(!d.info.contains_key("x"));
        assert!(parse_extraction_response(r#"{"problem":["a"]}"#).is_err());
        assert!(parse_extraction_response("[1,2]").is_err());
    }

    #[test]
    fn query_composition() {
        assert!(matches!(
            compose_retrieval_query(&ExtractedState::default()),
            Err(Error::NoQuery)
        ));
        let s = merge_extracted(
            &ExtractedState::default(),
            &delta(Some("Lower back pain for the past month"), &[], &[]),
        );
        assert_eq!(
            compose_retrieval_query(&s).unwrap(),
            "Lower back pain for the past month"
        );
        let s = merge_extracted(&s, &delta(None, &[("duration", "past month")], &[]));
        assert_eq!(
            compose_retrieval_query(&s).unwrap(),
            "Lower back pain for the past month duration: past month"
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_delta() -> impl Strategy<Value = ExtractionDelta> {
            (
                proptest::option::of("[A-Za-z ]{0,12}"),
                proptest::collection::vec(("[a-b ]{1,3}", "[a-z ]{0,6}"), 0..5),
                proptest::collection::vec("[A-Za-z ]{0,8}", 0..5),
            )
                .prop_map(|(problem, info, solutions)| ExtractionDelta {
                    problem,
                    info: info.into_iter().collect(),
                    solutions,
                })
        }

        proptest! {
            #[test]
            fn merge_is_idempotent(a in arb_delta(), d in arb_delta()) {
                let s = merge_extracted(&ExtractedState::default(), &a);
                let once = merge_extracted(&s, &d);
                let twice = merge_extracted(&once, &d);
                prop_assert_eq!(once, twice);
            }

            #[test]
            fn version_bumps_iff_content_changes(a in arb_delta(), d in arb_delta()) {
                let s = merge_extracted(&ExtractedState::default(), &a);
                let t = merge_extracted(&s, &d);
                let content_changed = s.problem != t.problem || s.info != t.info || s.solutions != t.solutions;
                prop_assert_eq!(t.version != s.version, content_changed);
                prop_assert!(t.version >= s.version);
            }

            #[test]
            fn solutions_stay_unique(a in arb_delta(), d in arb_delta()) {
                let t = merge_extracted(&merge_extracted(&ExtractedState::default(), &a), &d);
                for (i, x) in t.solutions.iter().enumerate() {
                    for y in &t.solutions[i + 1..] {
                        prop_assert!(!same_solution(x, y));
                    }
                }
            }

            #[test]
            fn disjoint_info_merges_commute_as_maps(
                k1 in proptest::collection::btree_map("[a-c]{1,2}", "[a-z]{1,4}", 0..4),
                k2 in proptest::collection::btree_map("[x-z]{1,2}", "[a-z]{1,4}", 0..4),
            ) {
                let d1 = ExtractionDelta { info: k1.into_iter().collect(), ..Default::default() };
                let d2 = ExtractionDelta { info: k2.into_iter().collect(), ..Default::default() };
                let base = ExtractedState::default();
                let ab = merge_extracted(&merge_extracted(&base, &d1), &d2);
                let ba = merge_extracted(&merge_extracted(&base, &d2), &d1);
                let as_map = |s: &ExtractedState| s.info.clone().into_iter().collect::<std::collections::BTreeMap<_, _>>();
                prop_assert_eq!(as_map(&ab), as_map(&ba));
                let first: Vec<_> = ab.info.keys().take(d1.info.len()).cloned().collect();
                let expected: Vec<_> = d1.info.keys().cloned().collect();
                prop_assert_eq!(first, expected);
            }
        }
    }
}
