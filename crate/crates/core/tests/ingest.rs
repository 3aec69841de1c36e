mod common;

use std::collections::BTreeSet;

use ainsight_core::index::ChunkKind;
use ainsight_core::ingest::{
    collect_chunks, scan_kb, source_id_for, ChunkingParams, KnowledgeBase, SourceKind,
};
use ainsight_core::providers::{mock_embed, Embedder, MockEmbedder};
use ainsight_core::{Error, Result};
use common::*;

#[test]
fn fixture_kb_scan_and_counts() {
    let root = fixtures().join("kb");
    let sources = scan_kb(&root).unwrap();
    assert_eq!(sources.len(), 11);
    let tables = sources
        .iter()
        .filter(|s| s.kind == SourceKind::StructuredTable)
        .count();
    assert_eq!(tables, 2);
    let paths: Vec<_> = sources.iter().map(|s| s.path.as_str()).collect();
    let mut sorted = paths.clone();
    sorted.sort();
    assert_eq!(paths, sorted);
    assert!(paths.iter().all(|p| !p.contains('\\')));

    let kb = KnowledgeBase::ingest(&root, &ChunkingParams::default(), &MockEmbedder).unwrap();
    let chunks = collect_chunks(&root, &sources, &ChunkingParams::default()).unwrap();
    assert_eq!(kb.index.len(), chunks.len());
    assert_eq!(kb.manifest.chunk_count, chunks.len());
    // one multi-chunk document per long file, one descriptor per table
    let descriptors = chunks
        .iter()
        .filter(|(c, _)| c.kind == ChunkKind::TableDescriptor)
        .count();
    assert_eq!(descriptors, 2);
    let ids: BTreeSet<_> = chunks.iter().map(|(c, _)| c.chunk_id.clone()).collect();
    assert_eq!(ids.len(), chunks.len());
    assert_eq!(kb.tables.len(), 2);
    assert!(kb.tables.get("pain_relievers_usage").is_some());
    assert!(kb.tables.get("survey").is_some());
}

#[test]
fn chunk_ids_derive_from_paths() {
    let root = fixtures().join("kb");
    let kb = KnowledgeBase::ingest(&root, &ChunkingParams::default(), &MockEmbedder).unwrap();
    let path = "health_data/canada_data/text_data/chunk_1/736fa9b2c4d1e8f05a3b.txt";
    let id = format!("{}#00000", source_id_for(path));
    let rec = kb.index.get(&id).unwrap();
    assert_eq!(rec.source_path, path);
    assert_eq!(rec.kind, ChunkKind::Text);
    // stored vectors are exactly the embedder output
    assert_eq!(rec.vector, mock_embed(&rec.text));
}

#[test]
fn ingest_is_reproducible() {
    let root = fixtures().join("kb");
    let a = KnowledgeBase::ingest(&root, &ChunkingParams::default(), &MockEmbedder).unwrap();
    let b = KnowledgeBase::ingest(&root, &ChunkingParams::default(), &MockEmbedder).unwrap();
    assert_eq!(a.index.chunk_ids(), b.index.chunk_ids());
    for id in a.index.chunk_ids() {
        assert_eq!(a.index.get(&id), b.index.get(&id));
    }
}

#[test]
fn smaller_chunks_mean_more_records() {
    let root = fixtures().join("kb");
    let small = ChunkingParams {
        max_chunk_chars: 300,
        overlap_chars: 50,
    };
    let kb = KnowledgeBase::ingest(&root, &small, &MockEmbedder).unwrap();
    let default = KnowledgeBase::ingest(&root, &ChunkingParams::default(), &MockEmbedder).unwrap();
    assert!(kb.index.len() > default.index.len());
    for id in kb.index.chunk_ids() {
        let rec = kb.index.get(&id).unwrap();
        if rec.kind == ChunkKind::Text {
            assert!(rec.text.chars().count() <= 300);
        }
    }
}

#[test]
fn save_and_open_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let root = fixtures().join("kb");
    let kb = KnowledgeBase::ingest(&root, &ChunkingParams::default(), &MockEmbedder).unwrap();
    kb.save(dir.path()).unwrap();
    let opened = KnowledgeBase::open(dir.path(), None).unwrap();
    assert_eq!(opened.manifest, kb.manifest);
    assert_eq!(opened.index.chunk_ids(), kb.index.chunk_ids());
    assert_eq!(opened.tables.len(), 2);
    let q = mock_embed("tylenol back pain");
    assert_eq!(
        opened.index.search(&q, 5).unwrap(),
        kb.index.search(&q, 5).unwrap()
    );

    let missing = tempfile::tempdir().unwrap();
    assert!(matches!(
        KnowledgeBase::open(missing.path(), None),
        Err(Error::Config(_))
    ));
}

#[test]
fn empty_and_missing_roots() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("image.png"), b"\x89PNG").unwrap();
    assert!(matches!(
        scan_kb(dir.path()),
        Err(Error::EmptyKnowledgeBase(_))
    ));
    assert!(matches!(
        scan_kb(dir.path().join("nope")),
        Err(Error::Config(_))
    ));
}

#[test]
fn malformed_files_are_skipped() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("good.txt"), "back pain notes").unwrap();
    std::fs::write(dir.path().join("binary.txt"), [0xffu8, 0xfe, 0x00]).unwrap();
    std::fs::write(dir.path().join("empty.md"), "").unwrap();
    std::fs::write(dir.path().join("ragged.csv"), "a,b\n1\n").unwrap();
    let kb = KnowledgeBase::ingest(dir.path(), &ChunkingParams::default(), &MockEmbedder).unwrap();
    assert_eq!(kb.index.len(), 1);
    assert!(kb.tables.is_empty());
}

struct Flaky;

impl Embedder for Flaky {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        if texts.iter().any(|t| t.contains("boom")) {
            return Err(Error::Provider {
                status: Some(500),
                message: "embedding backend down".into(),
            });
        }
        MockEmbedder.embed(texts)
    }
}

#[test]
fn provider_failure_reports_committed_chunks() {
    let dir = tempfile::tempdir().unwrap();
    for i in 0..40 {
        std::fs::write(
            dir.path().join(format!("doc{i:02}.txt")),
            format!("note {i}"),
        )
        .unwrap();
    }
    std::fs::write(dir.path().join("zz.txt"), "boom").unwrap();
    match KnowledgeBase::ingest(dir.path(), &ChunkingParams::default(), &Flaky) {
        Err(Error::IngestAborted { committed, .. }) => assert_eq!(committed, 32),
        other => panic!("unexpected {other:?}"),
    }
}
