//! Knowledge-base ingestion: scan a directory of `.txt`/`.md`/`.csv` files,
//! chunk the documents, describe the tables, embed everything and fill a
//! [`VectorIndex`].

mod chunk;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tracing::{info, warn};
use walkdir::WalkDir;

pub use chunk::{chunk_text, DEFAULT_MAX_CHUNK_CHARS, DEFAULT_OVERLAP_CHARS};

use crate::error::{Error, Result};
use crate::index::{ChunkKind, EmbeddingRecord, VectorIndex};
use crate::providers::Embedder;
use crate::query::{Table, TableCatalog};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const INDEX_FILE: &str = "index.jsonl";

const EMBED_BATCH: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    UnstructuredText,
    StructuredTable,
}

impl SourceKind {
    fn from_path(path: &Path) -> Option<SourceKind> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "txt" | "md" => Some(SourceKind::UnstructuredText),
            "csv" => Some(SourceKind::StructuredTable),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeSource {
    pub source_id: String,
    /// Relative to the knowledge-base root, `/`-separated.
    pub path: String,
    pub kind: SourceKind,
    pub byte_size: u64,
}

impl KnowledgeSource {
    pub fn new(path: impl Into<String>, kind: SourceKind, byte_size: u64) -> Self {
        let path = path.into();
        KnowledgeSource {
            source_id: source_id_for(&path),
            path,
            kind,
            byte_size,
        }
    }
}

/// Lowercase hex SHA-256 of the relative path.
pub fn source_id_for(relative_path: &str) -> String {
    hex::encode(Sha256::digest(relative_path.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeChunk {
    pub chunk_id: String,
    pub source_id: String,
    pub kind: ChunkKind,
    pub text: String,
    pub char_range: Option<(usize, usize)>,
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkingParams {
    pub max_chunk_chars: usize,
    pub overlap_chars: usize,
}

impl Default for ChunkingParams {
    fn default() -> Self {
        ChunkingParams {
            max_chunk_chars: DEFAULT_MAX_CHUNK_CHARS,
            overlap_chars: DEFAULT_OVERLAP_CHARS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KbManifest {
    pub kb_root: PathBuf,
    pub sources: Vec<KnowledgeSource>,
    pub chunk_count: usize,
    pub created_at_ms: u64,
    pub chunking_params: ChunkingParams,
}

impl KbManifest {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)?;
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Every `.txt`, `.md` and `.csv` file under `kb_root`, sorted by relative
/// path (byte-wise).
pub fn scan_kb(kb_root: impl AsRef<Path>) -> Result<Vec<KnowledgeSource>> {
    let root = kb_root.as_ref();
    if !root.is_dir() {
        return Err(Error::Config(format!(
            "knowledge base directory {} does not exist or is not a directory",
            root.display()
        )));
    }
    let mut sources = Vec::new();
    for entry in WalkDir::new(root).follow_links(true) {
        let entry =
            entry.map_err(|e| Error::Config(format!("cannot read {}: {e}", root.display())))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let Some(kind) = SourceKind::from_path(entry.path()) else {
            continue;
        };
        let relative = entry
            .path()
            .strip_prefix(root)
            .expect("walkdir yields paths under its root")
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        let byte_size = entry.metadata().map(|m| m.len()).unwrap_or(0);
        sources.push(KnowledgeSource::new(relative, kind, byte_size));
    }
    if sources.is_empty() {
        return Err(Error::EmptyKnowledgeBase(root.to_path_buf()));
    }
    sources.sort_by(|a, b| a.path.as_bytes().cmp(b.path.as_bytes()));
    Ok(sources)
}

/// A `table_descriptor` chunk summarising a table for retrieval. The chunk
/// id and source id default to the table id; ingestion re-homes them onto
/// the CSV source.
pub fn describe_table(
    table_id: &str,
    header: &[String],
    sample_row: &[String],
    row_count: usize,
) -> Result<KnowledgeChunk> {
    if header.is_empty() {
        return Err(Error::InvalidTable(format!(
            "table {table_id} has no columns"
        )));
    }
    let sample = if sample_row.is_empty() {
        "(none)".to_string()
    } else {
        header
            .iter()
            .zip(sample_row)
            .map(|(h, v)| format!("{h}={v}"))
            .collect::<Vec<_>>()
            .join("; ")
    };
    let text = format!(
        "Table {table_id} ({row_count} rows)\nColumns: {}\nSample row: {sample}\nQuery with: FROM {table_id} SELECT count()",
        header.join(", ")
    );
    Ok(KnowledgeChunk {
        chunk_id: format!("{table_id}#table"),
        source_id: table_id.to_string(),
        kind: ChunkKind::TableDescriptor,
        text,
        char_range: None,
        metadata: BTreeMap::from([("table_id".to_string(), table_id.to_string())]),
    })
}

fn sanitize_table_id(path: &str) -> String {
    let stem = Path::new(path)
        .file_stem()
        .map(|s| s.to_string_lossy().to_ascii_lowercase())
        .unwrap_or_default();
    let mut id = String::new();
    for c in stem.chars() {
        let c = if c.is_ascii_alphanumeric() { c } else { '_' };
        if !(c == '_' && id.ends_with('_')) {
            id.push(c);
        }
    }
    let id = id.trim_matches('_').to_string();
    match id.chars().next() {
        None => "table".into(),
        Some(c) if c.is_ascii_digit() => format!("t_{id}"),
        Some(_) => id,
    }
}

/// Table ids for every structured source, keyed by source path. Derived from
/// file stems; collisions get `_2`, `_3`, ... in path order.
pub fn table_ids(sources: &[KnowledgeSource]) -> BTreeMap<String, String> {
    let mut taken = BTreeSet::new();
    let mut ids = BTreeMap::new();
    for source in sources
        .iter()
        .filter(|s| s.kind == SourceKind::StructuredTable)
    {
        let base = sanitize_table_id(&source.path);
        let mut id = base.clone();
        let mut n = 2;
        while taken.contains(&id) {
            id = format!("{base}_{n}");
            n += 1;
        }
        taken.insert(id.clone());
        ids.insert(source.path.clone(), id);
    }
    ids
}

fn read_text(root: &Path, source: &KnowledgeSource) -> Option<String> {
    let path = root.join(&source.path);
    match fs::read(&path) {
        Ok(bytes) => match String::from_utf8(bytes) {
            Ok(text) => Some(text),
            Err(_) => {
                warn!(path = %source.path, "skipping file that is not valid UTF-8");
                None
            }
        },
        Err(e) => {
            warn!(path = %source.path, error = %e, "skipping unreadable file");
            None
        }
    }
}

/// Loads every CSV source into a catalog. Files that fail to decode or parse
/// are skipped with a warning.
pub fn load_tables(kb_root: impl AsRef<Path>, sources: &[KnowledgeSource]) -> TableCatalog {
    let root = kb_root.as_ref();
    let ids = table_ids(sources);
    let mut catalog = TableCatalog::new();
    for source in sources
        .iter()
        .filter(|s| s.kind == SourceKind::StructuredTable)
    {
        let Some(content) = read_text(root, source) else {
            continue;
        };
        match Table::from_csv(ids[&source.path].clone(), &content) {
            Ok(table) => catalog
                .register(source.path.clone(), table)
                .expect("table ids are unique"),
            Err(e) => warn!(path = %source.path, error = %e, "skipping malformed table"),
        }
    }
    catalog
}

/// Chunks and describes every source without embedding anything. Pure in the
/// directory contents and `params`.
pub fn collect_chunks(
    kb_root: impl AsRef<Path>,
    sources: &[KnowledgeSource],
    params: &ChunkingParams,
) -> Result<Vec<(KnowledgeChunk, String)>> {
    let root = kb_root.as_ref();
    let tables = load_tables(root, sources);
    let mut out = Vec::new();
    for source in sources {
        match source.kind {
            SourceKind::UnstructuredText => {
                let Some(content) = read_text(root, source) else {
                    continue;
                };
                match chunk_text(
                    source,
                    &content,
                    params.max_chunk_chars,
                    params.overlap_chars,
                ) {
                    Ok(chunks) => out.extend(chunks.into_iter().map(|c| (c, source.path.clone()))),
                    Err(Error::EmptySource(_)) => {
                        warn!(path = %source.path, "skipping empty source");
                    }
                    Err(e) => return Err(e),
                }
            }
            SourceKind::StructuredTable => {
                let Some(table) = tables.by_source_path(&source.path) else {
                    continue;
                };
                let sample: Vec<String> = table
                    .rows
                    .first()
                    .map(|r| r.iter().map(ToString::to_string).collect())
                    .unwrap_or_default();
                let mut descriptor =
                    describe_table(&table.table_id, &table.header(), &sample, table.rows.len())?;
                descriptor.chunk_id = chunk::chunk_id(&source.source_id, 0);
                descriptor.source_id = source.source_id.clone();
                descriptor
                    .metadata
                    .insert("path".to_string(), source.path.clone());
                out.push((descriptor, source.path.clone()));
            }
        }
    }
    Ok(out)
}

/// Embeds and upserts every chunk of `sources` into `index`.
///
/// On provider failure the error reports how many chunks were already
/// committed; those records stay in the index.
pub fn build_index(
    kb_root: impl AsRef<Path>,
    sources: &[KnowledgeSource],
    params: &ChunkingParams,
    embedder: &dyn Embedder,
    index: &VectorIndex,
) -> Result<KbManifest> {
    let root = kb_root.as_ref();
    if sources.is_empty() {
        return Err(Error::EmptyKnowledgeBase(root.to_path_buf()));
    }
    let chunks = collect_chunks(root, sources, params)?;
    let mut committed = 0;
    for batch in chunks.chunks(EMBED_BATCH) {
        let texts: Vec<String> = batch.iter().map(|(c, _)| c.text.clone()).collect();
        let vectors = embedder.embed(&texts).map_err(|e| Error::IngestAborted {
            committed,
            reason: e.to_string(),
        })?;
        if vectors.len() != batch.len() {
            return Err(Error::IngestAborted {
                committed,
                reason: format!(
                    "embedder returned {} vectors for {} texts",
                    vectors.len(),
                    batch.len()
                ),
            });
        }
        for ((chunk, path), vector) in batch.iter().zip(vectors) {
            index
                .upsert(EmbeddingRecord {
                    chunk_id: chunk.chunk_id.clone(),
                    vector,
                    source_path: path.clone(),
                    kind: chunk.kind,
                    text: chunk.text.clone(),
                })
                .map_err(|e| Error::IngestAborted {
                    committed,
                    reason: e.to_string(),
                })?;
            committed += 1;
        }
    }
    info!(
        sources = sources.len(),
        chunks = committed,
        "knowledge base indexed"
    );
    Ok(KbManifest {
        kb_root: root.to_path_buf(),
        sources: sources.to_vec(),
        chunk_count: chunks.len(),
        created_at_ms: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0),
        chunking_params: *params,
    })
}

/// A loaded knowledge base: the persisted index, its manifest and the
/// registered tables.
#[derive(Debug)]
pub struct KnowledgeBase {
    pub manifest: KbManifest,
    pub index: VectorIndex,
    pub tables: TableCatalog,
}

impl KnowledgeBase {
    /// Scans, chunks and embeds `kb_root` into a fresh index.
    pub fn ingest(
        kb_root: impl AsRef<Path>,
        params: &ChunkingParams,
        embedder: &dyn Embedder,
    ) -> Result<Self> {
        let root = kb_root.as_ref();
        let sources = scan_kb(root)?;
        let index = VectorIndex::new();
        let manifest = build_index(root, &sources, params, embedder, &index)?;
        let tables = load_tables(root, &sources);
        Ok(KnowledgeBase {
            manifest,
            index,
            tables,
        })
    }

    /// Writes `index.jsonl` and `manifest.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.index.save(dir.join(INDEX_FILE))?;
        self.manifest.save(dir.join(MANIFEST_FILE))
    }

    /// Opens a saved knowledge base. Tables are re-read from `kb_root`
    /// (the manifest's, unless overridden). `dir` may also name the
    /// `index.jsonl` file inside it.
    pub fn open(dir: impl AsRef<Path>, kb_root: Option<&Path>) -> Result<Self> {
        let mut dir = dir.as_ref();
        if dir.is_file() {
            dir = dir.parent().unwrap_or(Path::new("."));
        }
        let index_path = dir.join(INDEX_FILE);
        if !index_path.is_file() {
            return Err(Error::Config(format!(
                "no index file at {}",
                index_path.display()
            )));
        }
        let index = VectorIndex::load(&index_path)?;
        let manifest = KbManifest::load(dir.join(MANIFEST_FILE))?;
        let root = kb_root.unwrap_or(&manifest.kb_root);
        let tables = load_tables(root, &manifest.sources);
        Ok(KnowledgeBase {
            manifest,
            index,
            tables,
        })
    }
}
