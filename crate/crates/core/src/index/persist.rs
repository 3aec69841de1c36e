use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EmbeddingRecord, Inner, VectorIndex};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// First line of a persisted index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexHeader {
    pub dimension: Option<usize>,
    pub count: usize,
    pub format_version: u32,
}

impl VectorIndex {
    /// Writes the index as line-delimited JSON: a header line, then one
    /// record per line in chunk id order. The file is replaced atomically.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<usize> {
        let path = path.as_ref();
        let inner = self.read();
        let tmp = path.with_extension("tmp");
        let file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut out = BufWriter::new(file);
        let header = IndexHeader {
            dimension: inner.dimension,
            count: inner.records.len(),
            format_version: FORMAT_VERSION,
        };
        let write_line = |out: &mut BufWriter<fs::File>, line: String| {
            out.write_all(line.as_bytes())
                .and_then(|_| out.write_all(b"\n"))
                .map_err(|e| Error::io(&tmp, e))
        };
        write_line(&mut out, serde_json::to_string(&header)?)?;
        for record in inner.records.values() {
            write_line(&mut out, serde_json::to_string(record)?)?;
        }
        out.flush().map_err(|e| Error::io(&tmp, e))?;
        drop(out);
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
        Ok(header.count)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let located = |line: usize, message: String| Error::Load {
            path: path.to_path_buf(),
            line,
            message,
        };

        let mut lines = BufReader::new(file).lines();
        let header_line = lines
            .next()
            .ok_or_else(|| located(1, "missing header line".into()))?
            .map_err(|e| located(1, e.to_string()))?;
        let header: IndexHeader = serde_json::from_str(&header_line)
            .map_err(|e| located(1, format!("bad header: {e}")))?;
        if header.format_version != FORMAT_VERSION {
            return Err(located(
                1,
                format!("unsupported format_version {}", header.format_version),
            ));
        }

        let mut inner = Inner {
            dimension: header.dimension,
            ..Inner::default()
        };
        let mut previous: Option<String> = None;
        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            let line = line.map_err(|e| located(line_no, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: EmbeddingRecord = serde_json::from_str(&line)
                .map_err(|e| located(line_no, format!("bad record: {e}")))?;
            if Some(record.vector.len()) != inner.dimension {
                return Err(located(
                    line_no,
                    format!(
                        "record dimension {} does not match header {:?}",
                        record.vector.len(),
                        inner.dimension
                    ),
                ));
            }
            super::validate_vector(&record.vector).map_err(|e| located(line_no, e.to_string()))?;
            if previous.as_deref() >= Some(record.chunk_id.as_str()) {
                return Err(located(
                    line_no,
                    format!("record {} is out of chunk_id order", record.chunk_id),
                ));
            }
            previous = Some(record.chunk_id.clone());
            inner.records.insert(record.chunk_id.clone(), record);
        }
        if inner.records.len() != header.count {
            return Err(located(
                inner.records.len() + 2,
                format!(
                    "header declares {} records, found {}",
                    header.count,
                    inner.records.len()
                ),
            ));
        }
        Ok(VectorIndex {
            inner: std::sync::RwLock::new(inner),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::ChunkKind;

    fn rec(id: &str, v: Vec<f64>) -> EmbeddingRecord {
        EmbeddingRecord {
            chunk_id: id.into(),
            vector: v,
            source_path: "p.txt".into(),
            kind: ChunkKind::Text,
            text: "t".into(),
        }
    }

    #[test]
    fn empty_index_saves_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.jsonl");
        assert_eq!(VectorIndex::new().save(&path).unwrap(), 0);
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert_eq!(
            text.trim(),
            r#"{"dimension":null,"count":0,"format_version":1}"#
        );
        assert_eq!(VectorIndex::load(&path).unwrap().len(), 0);
    }

    #[test]
    fn truncated_file_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.jsonl");
        let idx = VectorIndex::new();
        for id in ["a", "b", "c"] {
            idx.upsert(rec(id, vec![1.0, 2.0])).unwrap();
        }
        idx.save(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        // cut the last record in half
        let cut = &text[..text.len() - 20];
        fs::write(&path, cut).unwrap();
        match VectorIndex::load(&path) {
            Err(Error::Load { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected load error, got {other:?}"),
        }
    }

    #[test]
    fn missing_record_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.jsonl");
        let idx = VectorIndex::new();
        idx.upsert(rec("a", vec![1.0])).unwrap();
        idx.upsert(rec("b", vec![1.0])).unwrap();
        idx.save(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let kept: Vec<_> = text.lines().take(2).collect();
        fs::write(&path, kept.join("\n")).unwrap();
        let err = VectorIndex::load(&path).unwrap_err();
        assert!(matches!(err, Error::Load { line: 3, .. }), "{err}");
    }

    #[test]
    fn vectors_round_trip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.jsonl");
        let idx = VectorIndex::new();
        let v = vec![0.1, 1.0 / 3.0, -2.5e-17, 123456.789];
        idx.upsert(rec("a", v.clone())).unwrap();
        idx.save(&path).unwrap();
        assert_eq!(
            VectorIndex::load(&path).unwrap().get("a").unwrap().vector,
            v
        );
    }
}
