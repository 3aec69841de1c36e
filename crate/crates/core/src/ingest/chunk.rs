use std::collections::BTreeMap;

use super::{KnowledgeChunk, KnowledgeSource};
use crate::error::{Error, Result};
use crate::index::ChunkKind;

pub const DEFAULT_MAX_CHUNK_CHARS: usize = 1000;
pub const DEFAULT_OVERLAP_CHARS: usize = 200;

pub(crate) fn chunk_id(source_id: &str, ordinal: usize) -> String {
    format!("{source_id}#{ordinal:05}")
}

/// Character spans `[start, end)` covering `chars`. Each span holds at most
/// `max` characters and ends just after the last whitespace that fits, when
/// one exists far enough in; the next span starts `overlap` characters back,
/// nudged forward to a word start when one is available.
fn split_points(chars: &[char], max: usize, overlap: usize) -> Vec<(usize, usize)> {
    let n = chars.len();
    let mut spans = Vec::new();
    let mut start = 0;
    loop {
        if n - start <= max {
            spans.push((start, n));
            return spans;
        }
        let limit = start + max;
        let end = (start + overlap + 1..=limit)
            .rev()
            .find(|&i| chars[i - 1].is_whitespace())
            .unwrap_or(limit);
        spans.push((start, end));

        let back = end - overlap;
        start = (back..end)
            .find(|&j| chars[j - 1].is_whitespace() && !chars[j].is_whitespace())
            .unwrap_or(back);
    }
}

/// Splits `content` into overlapping text chunks of at most `max_chunk_chars`
/// characters. `char_range` offsets are in characters.
pub fn chunk_text(
    source: &KnowledgeSource,
    content: &str,
    max_chunk_chars: usize,
    overlap_chars: usize,
) -> Result<Vec<KnowledgeChunk>> {
    if max_chunk_chars <= overlap_chars {
        return Err(Error::Config(format!(
            "max_chunk_chars ({max_chunk_chars}) must exceed overlap_chars ({overlap_chars})"
        )));
    }
    if content.is_empty() {
        return Err(Error::EmptySource(source.path.clone()));
    }
    let chars: Vec<char> = content.chars().collect();
    Ok(split_points(&chars, max_chunk_chars, overlap_chars)
        .into_iter()
        .enumerate()
        .map(|(ordinal, (start, end))| KnowledgeChunk {
            chunk_id: chunk_id(&source.source_id, ordinal),
            source_id: source.source_id.clone(),
            kind: ChunkKind::Text,
            text: chars[start..end].iter().collect(),
            char_range: Some((start, end)),
            metadata: BTreeMap::from([
                ("path".to_string(), source.path.clone()),
                ("ordinal".to_string(), ordinal.to_string()),
            ]),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{KnowledgeSource, SourceKind};

    fn src() -> KnowledgeSource {
        KnowledgeSource::new("notes/a.txt", SourceKind::UnstructuredText, 0)
    }

    /// Independent reassembly: append each chunk minus the prefix it shares
    /// with the previous chunk's range.
    fn reassemble(chunks: &[KnowledgeChunk]) -> String {
        let mut out = String::new();
        let mut prev_end = 0usize;
        for c in chunks {
            let (start, end) = c.char_range.unwrap();
            let skip = prev_end.saturating_sub(start);
            out.extend(c.text.chars().skip(skip));
            prev_end = end;
        }
        out
    }

    #[test]
    fn short_content_is_one_chunk() {
        let content = "x".repeat(100);
        let chunks = chunk_text(&src(), &content, 1000, 200).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].char_range, Some((0, 100)));
    }

    #[test]
    fn splits_land_on_whitespace() {
        let chunks = chunk_text(&src(), "aa bb cc dd", 6, 3).unwrap();
        let texts: Vec<_> = chunks.iter().map(|c| c.text.as_str()).collect();
        assert_eq!(texts, ["aa bb ", "bb cc ", "cc dd"]);
        assert_eq!(reassemble(&chunks), "aa bb cc dd");
    }

    #[test]
    fn hard_split_without_whitespace() {
        let content = "abcdefghijklmnop";
        let chunks = chunk_text(&src(), content, 5, 2).unwrap();
        assert!(chunks.iter().all(|c| c.text.chars().count() <= 5));
        assert_eq!(reassemble(&chunks), content);
    }

    #[test]
    fn ids_are_ordinal_and_stable() {
        let chunks = chunk_text(&src(), "aa bb cc dd", 6, 3).unwrap();
        let sid = &src().source_id;
        assert_eq!(chunks[2].chunk_id, format!("{sid}#00002"));
    }

    #[test]
    fn rejects_empty_and_bad_params() {
        assert!(matches!(
            chunk_text(&src(), "", 10, 2),
            Err(Error::EmptySource(_))
        ));
        assert!(matches!(
            chunk_text(&src(), "abc", 2, 2),
            Err(Error::Config(_))
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn coverage_and_reconstruction(
                content in "[a-z \n\u{e9}\u{4e2d}]{1,400}",
                max in 2usize..60,
                overlap_frac in 0.0f64..0.9,
            ) {
                let overlap = ((max as f64) * overlap_frac) as usize;
                prop_assume!(overlap < max);
                let chunks = chunk_text(&src(), &content, max, overlap).unwrap();
                let n = content.chars().count();
                prop_assert_eq!(chunks[0].char_range.unwrap().0, 0);
                prop_assert_eq!(chunks.last().unwrap().char_range.unwrap().1, n);
                for pair in chunks.windows(2) {
                    let (a, b) = (pair[0].char_range.unwrap(), pair[1].char_range.unwrap());
                    prop_assert!(b.0 > a.0 && b.0 <= a.1, "gap or stall between {:?} and {:?}", a, b);
                    prop_assert!(a.1 - b.0 <= overlap);
                }
                for c in &chunks {
                    let (s, e) = c.char_range.unwrap();
                    prop_assert!(e > s);
                    prop_assert!(!c.text.is_empty() && c.text.chars().count() <= max);
                }
                prop_assert_eq!(reassemble(&chunks), content);
            }
        }
    }
}
