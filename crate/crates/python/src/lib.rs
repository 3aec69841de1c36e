//! Python bindings. Structured results (snapshots, metrics, search hits)
//! cross the boundary as plain dicts and lists.

use std::path::PathBuf;
use std::sync::Arc;

use ainsight_core::index::{self, ChunkKind, EmbeddingRecord};
use ainsight_core::ingest::{self, ChunkingParams, KnowledgeBase, KnowledgeSource, SourceKind};
use ainsight_core::pipeline::{
    Engine as CoreEngine, EngineConfig, SegmentPayload, SessionConfig, SimClock, Speaker,
    DEFAULT_TICK_MS,
};
use ainsight_core::providers::{self, ProviderSet};
use ainsight_core::query::{self, QueryResult};
use ainsight_core::replay::{self, ClockKind, ReplayOptions};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

create_exception!(ainsight, AInsightError, PyException);
create_exception!(ainsight, QueryParseError, PyValueError);

fn err(e: ainsight_core::Error) -> PyErr {
    match e {
        ainsight_core::Error::InvalidInput(m) => PyValueError::new_err(m),
        other => AInsightError::new_err(other.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| AInsightError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Cosine similarity of two equal-length, non-zero vectors.
#[pyfunction]
fn cosine_similarity(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    index::cosine_similarity(&a, &b).map_err(err)
}

/// The deterministic offline embedding used by the mock provider.
#[pyfunction]
fn mock_embed(text: &str) -> Vec<f64> {
    providers::mock_embed(text)
}

/// Splits `content` into overlapping chunks; returns `(chunk_id, text)` pairs.
#[pyfunction]
#[pyo3(signature = (content, path="document.txt", max_chunk_chars=ingest::DEFAULT_MAX_CHUNK_CHARS, overlap_chars=ingest::DEFAULT_OVERLAP_CHARS))]
fn chunk_text(
    content: &str,
    path: &str,
    max_chunk_chars: usize,
    overlap_chars: usize,
) -> PyResult<Vec<(String, String)>> {
    let source = KnowledgeSource::new(path, SourceKind::UnstructuredText, content.len() as u64);
    let chunks =
        ingest::chunk_text(&source, content, max_chunk_chars, overlap_chars).map_err(err)?;
    Ok(chunks.into_iter().map(|c| (c.chunk_id, c.text)).collect())
}

/// Parses a table query and returns its canonical text.
#[pyfunction]
fn parse_query(text: &str) -> PyResult<String> {
    query::parse_query(text)
        .map(|q| q.to_string())
        .map_err(|e| QueryParseError::new_err((e.to_string(), e.position)))
}

fn result_to_py<'py>(py: Python<'py>, result: &QueryResult) -> PyResult<Bound<'py, PyAny>> {
    match result {
        QueryResult::Ungrouped(v) => Ok(v.into_pyobject(py)?.into_any()),
        QueryResult::Grouped(groups) => {
            let dict = PyDict::new(py);
            for g in groups {
                dict.set_item(g.key.as_deref(), g.value)?;
            }
            Ok(dict.into_any())
        }
    }
}

/// A CSV table that can be queried.
#[pyclass(frozen)]
struct Table {
    inner: query::Table,
}

#[pymethods]
impl Table {
    #[new]
    fn new(table_id: &str, csv: &str) -> PyResult<Self> {
        Ok(Table {
            inner: query::Table::from_csv(table_id, csv).map_err(err)?,
        })
    }

    #[getter]
    fn header(&self) -> Vec<String> {
        self.inner.header()
    }

    #[getter]
    fn row_count(&self) -> usize {
        self.inner.rows.len()
    }

    /// A number (or None) for ungrouped queries, a dict keyed by group otherwise.
    fn query<'py>(&self, py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
        let q = query::parse_query(text)
            .map_err(|e| QueryParseError::new_err((e.to_string(), e.position)))?;
        let result = query::evaluate(&q, &self.inner).map_err(err)?;
        result_to_py(py, &result)
    }

    /// The result as the pipeline renders it into prompts.
    fn query_text(&self, text: &str) -> PyResult<String> {
        let q = query::parse_query(text)
            .map_err(|e| QueryParseError::new_err((e.to_string(), e.position)))?;
        Ok(query::evaluate(&q, &self.inner).map_err(err)?.to_string())
    }
}

/// Exact top-k cosine index.
#[pyclass(frozen)]
struct VectorIndex {
    inner: index::VectorIndex,
}

#[pymethods]
impl VectorIndex {
    #[new]
    fn new() -> Self {
        VectorIndex {
            inner: index::VectorIndex::new(),
        }
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(VectorIndex {
            inner: index::VectorIndex::load(path).map_err(err)?,
        })
    }

    /// Returns the number of records written.
    fn save(&self, path: PathBuf) -> PyResult<usize> {
        self.inner.save(path).map_err(err)
    }

    /// Inserts or replaces a record; True when it replaced one.
    #[pyo3(signature = (chunk_id, vector, source_path="", text="", table=false))]
    fn upsert(
        &self,
        chunk_id: String,
        vector: Vec<f64>,
        source_path: &str,
        text: &str,
        table: bool,
    ) -> PyResult<bool> {
        self.inner
            .upsert(EmbeddingRecord {
                chunk_id,
                vector,
                source_path: source_path.into(),
                kind: if table {
                    ChunkKind::TableDescriptor
                } else {
                    ChunkKind::Text
                },
                text: text.into(),
            })
            .map_err(err)
    }

    /// Hits as dicts, best first; ties go to the smaller chunk id.
    #[pyo3(signature = (vector, k=index::DEFAULT_TOP_K))]
    fn search<'py>(
        &self,
        py: Python<'py>,
        vector: Vec<f64>,
        k: usize,
    ) -> PyResult<Bound<'py, PyAny>> {
        let hits = self.inner.search(&vector, k).map_err(err)?;
        to_py(py, &hits)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __contains__(&self, chunk_id: &str) -> bool {
        self.inner.contains(chunk_id)
    }

    #[getter]
    fn dimension(&self) -> Option<usize> {
        self.inner.dimension()
    }
}

/// Indexes `kb_dir` with the mock embedder and writes it to `index_dir`.
/// Returns `(chunks, sources)`.
#[pyfunction]
fn ingest_kb(kb_dir: PathBuf, index_dir: PathBuf) -> PyResult<(usize, usize)> {
    let kb = KnowledgeBase::ingest(
        &kb_dir,
        &ChunkingParams::default(),
        &providers::MockEmbedder,
    )
    .map_err(err)?;
    kb.save(&index_dir).map_err(err)?;
    Ok((kb.index.len(), kb.manifest.sources.len()))
}

fn parse_speaker(s: &str) -> PyResult<Speaker> {
    match s {
        "doctor" => Ok(Speaker::Doctor),
        "patient" => Ok(Speaker::Patient),
        other => Err(PyValueError::new_err(format!("unknown speaker {other:?}"))),
    }
}

/// A pipeline engine over mock providers. With `clock="sim"` time only moves
/// through `set_time`.
#[pyclass(frozen)]
struct Engine {
    inner: Arc<CoreEngine>,
    sim: Option<Arc<SimClock>>,
}

#[pymethods]
impl Engine {
    #[new]
    #[pyo3(signature = (kb_dir=None, index=None, mock_fixtures=None, tick_ms=DEFAULT_TICK_MS, clock="sim"))]
    fn new(
        kb_dir: Option<PathBuf>,
        index: Option<PathBuf>,
        mock_fixtures: Option<PathBuf>,
        tick_ms: u64,
        clock: &str,
    ) -> PyResult<Self> {
        let clock: ClockKind = clock.parse().map_err(err)?;
        let providers = ProviderSet::mock(mock_fixtures.as_deref()).map_err(err)?;
        let kb = match (index, kb_dir) {
            (Some(index), kb_dir) => KnowledgeBase::open(index, kb_dir.as_deref()),
            (None, Some(kb_dir)) => {
                KnowledgeBase::ingest(kb_dir, &ChunkingParams::default(), &providers)
            }
            (None, None) => {
                return Err(PyValueError::new_err("pass kb_dir or index"));
            }
        }
        .map_err(err)?;
        let config = EngineConfig {
            tick_ms,
            ..EngineConfig::default()
        };
        let mut engine = CoreEngine::new(kb, providers, config).map_err(err)?;
        let sim = match clock {
            ClockKind::Sim => {
                let sim = Arc::new(SimClock::new(0));
                engine = engine.with_clock(sim.clone());
                Some(sim)
            }
            ClockKind::Wall => None,
        };
        Ok(Engine {
            inner: Arc::new(engine),
            sim,
        })
    }

    fn health<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.health())
    }

    /// Moves the simulated clock; sessions tick only when `advance` is called.
    fn set_time(&self, t_ms: u64) -> PyResult<()> {
        match &self.sim {
            Some(sim) => {
                sim.set(t_ms);
                Ok(())
            }
            None => Err(PyValueError::new_err("engine runs on the wall clock")),
        }
    }

    #[pyo3(signature = (session_id=None, fixture_key=None))]
    fn create_session(
        &self,
        session_id: Option<String>,
        fixture_key: Option<String>,
    ) -> PyResult<String> {
        let session = self
            .inner
            .create_session(SessionConfig {
                session_id,
                fixture_key,
                clock: None,
            })
            .map_err(err)?;
        Ok(session.id().to_string())
    }

    /// Appends a text segment and returns its sequence number.
    fn append(
        &self,
        session_id: &str,
        speaker: &str,
        text: String,
        offset_ms: u64,
    ) -> PyResult<u64> {
        let session = self.inner.session(session_id).map_err(err)?;
        session
            .append_segment(
                parse_speaker(speaker)?,
                SegmentPayload::Text(text),
                offset_ms,
            )
            .map_err(err)
    }

    /// Runs every tick due at the session's current time; returns the reports.
    fn advance<'py>(&self, py: Python<'py>, session_id: &str) -> PyResult<Bound<'py, PyAny>> {
        let session = self.inner.session(session_id).map_err(err)?;
        let now = session.clock().now_ms();
        let reports = session.advance_to(now).map_err(err)?;
        to_py(py, &reports)
    }

    fn snapshot<'py>(&self, py: Python<'py>, session_id: &str) -> PyResult<Bound<'py, PyAny>> {
        let session = self.inner.session(session_id).map_err(err)?;
        to_py(py, &*session.snapshot())
    }

    fn finish<'py>(&self, py: Python<'py>, session_id: &str) -> PyResult<Bound<'py, PyAny>> {
        let session = self.inner.session(session_id).map_err(err)?;
        to_py(py, &*session.finish())
    }

    /// Replays a script on its own session; returns `(metrics, final_snapshot)`.
    #[pyo3(signature = (script, speed=1.0, clock="sim", session_id=None, fixture_key=None))]
    fn replay<'py>(
        &self,
        py: Python<'py>,
        script: PathBuf,
        speed: f64,
        clock: &str,
        session_id: Option<String>,
        fixture_key: Option<String>,
    ) -> PyResult<(Bound<'py, PyAny>, Bound<'py, PyAny>)> {
        let script = replay::load_script(script).map_err(err)?;
        let opts = ReplayOptions {
            speed,
            clock: clock.parse().map_err(err)?,
            session_id,
            fixture_key,
        };
        let engine = self.inner.clone();
        let outcome = py
            .detach(move || replay::run_replay(&script, &engine, &opts))
            .map_err(|f| err(f.error))?;
        Ok((to_py(py, &outcome.metrics)?, to_py(py, &*outcome.snapshot)?))
    }
}

#[pymodule]
fn ainsight(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("AInsightError", m.py().get_type::<AInsightError>())?;
    m.add("QueryParseError", m.py().get_type::<QueryParseError>())?;
    m.add_function(wrap_pyfunction!(cosine_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(mock_embed, m)?)?;
    m.add_function(wrap_pyfunction!(chunk_text, m)?)?;
    m.add_function(wrap_pyfunction!(parse_query, m)?)?;
    m.add_function(wrap_pyfunction!(ingest_kb, m)?)?;
    m.add_class::<Table>()?;
    m.add_class::<VectorIndex>()?;
    m.add_class::<Engine>()?;
    Ok(())
}
