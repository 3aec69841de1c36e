use ainsight_acceptance::search_oracle::{top_k, OracleRecord};
use ainsight_acceptance::table_oracle::{self, RefResult};
use ainsight_acceptance::{query_gen, rel_close};
use ainsight_core::index::{ChunkKind, EmbeddingRecord, VectorIndex};
use ainsight_core::query::{evaluate, parse_query, QueryResult, Table};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_vector() -> impl Strategy<Value = Vec<f64>> {
    // coarse components make exact ties between different vectors likely
    prop::collection::vec(-3i8..=3, 4).prop_filter_map("non-zero", |v| {
        v.iter()
            .any(|x| *x != 0)
            .then(|| v.into_iter().map(f64::from).collect())
    })
}

proptest! {
    #[test]
    fn search_matches_full_sort(
        vectors in prop::collection::vec(small_vector(), 1..60),
        query in small_vector(),
        k in 1usize..8,
    ) {
        let records: Vec<OracleRecord> = vectors
            .into_iter()
            .enumerate()
            .map(|(i, vector)| OracleRecord { id: format!("c{:03}", (i * 37) % 1000), vector })
            .collect();
        let index = VectorIndex::new();
        for r in &records {
            index.upsert(EmbeddingRecord {
                chunk_id: r.id.clone(),
                vector: r.vector.clone(),
                source_path: String::new(),
                kind: ChunkKind::Text,
                text: String::new(),
            }).unwrap();
        }
        let got: Vec<String> = index.search(&query, k).unwrap().into_iter().map(|h| h.chunk_id).collect();
        let want: Vec<String> = top_k(&records, &query, k).into_iter().map(|(id, _)| id).collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn evaluator_matches_reference(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let table = table_oracle::random_table(&mut rng, "t");
        let q = table_oracle::random_query(&mut rng, &table);
        let sut = Table::from_csv("t", &table.to_csv()).unwrap();
        let got = evaluate(&parse_query(&q.render()).unwrap(), &sut);
        let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) => rel_close(a, b, 1e-9),
            (a, b) => a == b,
        };
        let ok = match (&got, table_oracle::evaluate(&q, &table)) {
            (Err(_), RefResult::Error) => true,
            (Ok(QueryResult::Ungrouped(a)), RefResult::Scalar(b)) => close(*a, b),
            (Ok(QueryResult::Grouped(g)), RefResult::Groups(w)) => {
                g.len() == w.len()
                    && g.iter().zip(&w).all(|(g, (k, v))| g.key == *k && close(g.value, *v))
            }
            _ => false,
        };
        prop_assert!(ok, "{} gave {:?}", q.render(), got);
    }

    #[test]
    fn rendered_queries_parse_back(seed in any::<u64>()) {
        let ast = query_gen::query(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(parse_query(&ast.to_string()).unwrap(), ast);
    }

    #[test]
    fn parser_is_total(input in ".{0,200}") {
        if let Err(e) = parse_query(&input) {
            prop_assert!(e.position <= input.chars().count());
        }
    }
}
