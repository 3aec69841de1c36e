//! Random query ASTs for round-trip tests and random input for fuzzing.

use ainsight_core::query::{Aggregate, AggregateFn, Comparator, Filter, Literal, TableQuery};
use rand::seq::IndexedRandom;
use rand::Rng;

const PLAIN: [&str; 8] = [
    "survey",
    "Age",
    "days_per_week",
    "_x1",
    "Region",
    "t",
    "Medication",
    "A_b_C",
];
const AWKWARD: [&str; 9] = [
    "select",
    "Group",
    "two words",
    "quote\"inside",
    "9lives",
    "naïve",
    "a-b",
    "'single'",
    " padded ",
];

pub fn identifier(rng: &mut impl Rng) -> String {
    if rng.random_bool(0.7) {
        PLAIN.choose(rng).unwrap().to_string()
    } else {
        AWKWARD.choose(rng).unwrap().to_string()
    }
}

pub fn literal(rng: &mut impl Rng) -> Literal {
    match rng.random_range(0..4) {
        0 => Literal::Number(rng.random_range(-1000..1000) as f64),
        1 => Literal::Number(rng.random_range(-1e6..1e6)),
        2 => Literal::Number(rng.random_range(0.0..1.0) * 10f64.powi(rng.random_range(-8..8))),
        _ => {
            let words = [
                "Tylenol 3",
                "",
                "it's",
                "O''Neil",
                "x",
                "AND",
                "Ontario",
                "é",
            ];
            Literal::Text(words.choose(rng).unwrap().to_string())
        }
    }
}

/// Any syntactically valid query; column-less aggregates only for count.
pub fn query(rng: &mut impl Rng) -> TableQuery {
    let filters = (0..rng.random_range(0..4))
        .map(|_| Filter {
            column: identifier(rng),
            comparator: *Comparator::ALL.choose(rng).unwrap(),
            literal: literal(rng),
        })
        .collect();
    let function = *AggregateFn::ALL.choose(rng).unwrap();
    let column = if function == AggregateFn::Count && rng.random_bool(0.5) {
        None
    } else {
        Some(identifier(rng))
    };
    TableQuery {
        table_id: identifier(rng),
        filters,
        group_by: rng.random_bool(0.4).then(|| identifier(rng)),
        aggregate: Aggregate { function, column },
    }
}

const SOUP: [&str; 24] = [
    "FROM",
    "from",
    "WHERE",
    "AND",
    "GROUP",
    "BY",
    "SELECT",
    "mean",
    "count",
    "distinct_count",
    "(",
    ")",
    "=",
    "!=",
    "<=",
    ">",
    "CONTAINS",
    "'",
    "\"",
    "-",
    ".",
    "1.5",
    "Age",
    "''",
];

/// Fuzz input of at most `max_len` bytes: raw bytes, grammar token soup, or
/// a mutated valid query, in equal shares.
pub fn fuzz_input(rng: &mut impl Rng, max_len: usize) -> Vec<u8> {
    let mut bytes = match rng.random_range(0..3) {
        0 => {
            let len = rng.random_range(0..=max_len);
            (0..len).map(|_| rng.random::<u8>()).collect()
        }
        1 => {
            let mut s = String::new();
            for _ in 0..rng.random_range(0..60) {
                s.push_str(SOUP.choose(rng).unwrap());
                if rng.random_bool(0.7) {
                    s.push(' ');
                }
            }
            s.into_bytes()
        }
        _ => {
            let mut b = query(rng).to_string().into_bytes();
            for _ in 0..rng.random_range(1..6) {
                let at = rng.random_range(0..=b.len());
                match rng.random_range(0..3) {
                    0 if at < b.len() => {
                        b.remove(at);
                    }
                    1 if at < b.len() => b[at] = rng.random(),
                    _ => b.insert(at, rng.random()),
                }
            }
            b
        }
    };
    bytes.truncate(max_len);
    bytes
}
