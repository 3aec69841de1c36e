//! A reference evaluator for table queries, written against the query
//! semantics rather than the production code: filters are ANDed, a blank
//! cell fails every comparison and is skipped by aggregates, ordering
//! comparisons need numeric columns and CONTAINS needs text.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub enum RefLit {
    Num(f64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefFilter {
    pub column: String,
    /// One of `=`, `!=`, `<`, `<=`, `>`, `>=`, `CONTAINS`.
    pub op: &'static str,
    pub lit: RefLit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefQuery {
    pub table: String,
    pub filters: Vec<RefFilter>,
    pub group_by: Option<String>,
    /// `mean`, `sum`, `count`, `min`, `max` or `distinct_count`.
    pub func: &'static str,
    pub column: Option<String>,
}

impl RefQuery {
    pub fn new(table: &str, func: &'static str, column: Option<&str>) -> Self {
        RefQuery {
            table: table.into(),
            filters: Vec::new(),
            group_by: None,
            func,
            column: column.map(str::to_string),
        }
    }

    pub fn filter(mut self, column: &str, op: &'static str, lit: RefLit) -> Self {
        self.filters.push(RefFilter {
            column: column.into(),
            op,
            lit,
        });
        self
    }

    pub fn group(mut self, column: &str) -> Self {
        self.group_by = Some(column.into());
        self
    }

    /// Query text with every identifier double-quoted.
    pub fn render(&self) -> String {
        let ident = |s: &str| format!("\"{}\"", s.replace('"', "\"\""));
        let mut out = format!("FROM {}", ident(&self.table));
        for (i, f) in self.filters.iter().enumerate() {
            let lit = match &f.lit {
                RefLit::Num(n) => format!("{n}"),
                RefLit::Text(t) => format!("'{}'", t.replace('\'', "''")),
            };
            let joiner = if i == 0 { "WHERE" } else { "AND" };
            out.push_str(&format!(" {joiner} {} {} {lit}", ident(&f.column), f.op));
        }
        if let Some(g) = &self.group_by {
            out.push_str(&format!(" GROUP BY {}", ident(g)));
        }
        let col = self.column.as_deref().map(ident).unwrap_or_default();
        out.push_str(&format!(" SELECT {}({col})", self.func));
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RefResult {
    Scalar(Option<f64>),
    /// `(key, value)` in key order: numbers numerically, text byte-wise,
    /// the blank key last as `None`.
    Groups(Vec<(Option<String>, Option<f64>)>),
    Error,
}

/// Raw CSV: header plus string cells.
#[derive(Debug, Clone)]
pub struct RefTable {
    pub id: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

fn is_decimal(s: &str) -> bool {
    let s = s.strip_prefix(['+', '-']).unwrap_or(s);
    let mut seen_digit = false;
    let mut seen_dot = false;
    for c in s.chars() {
        match c {
            '0'..='9' => seen_digit = true,
            '.' if !seen_dot => seen_dot = true,
            _ => return false,
        }
    }
    seen_digit
}

fn blank(s: &str) -> bool {
    s.trim().is_empty()
}

impl RefTable {
    pub fn from_csv(id: &str, text: &str) -> RefTable {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_reader(text.as_bytes());
        let mut rows: Vec<Vec<String>> = reader
            .records()
            .map(|r| {
                r.expect("oracle tables are well formed")
                    .iter()
                    .map(String::from)
                    .collect()
            })
            .collect();
        let header = rows
            .remove(0)
            .into_iter()
            .map(|h| h.trim().to_string())
            .collect();
        RefTable {
            id: id.into(),
            header,
            rows,
        }
    }

    /// Writes the table back as CSV text.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).unwrap();
        for row in &self.rows {
            w.write_record(row).unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }

    fn col(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    fn numeric(&self, c: usize) -> bool {
        self.rows
            .iter()
            .map(|r| r[c].trim())
            .filter(|v| !v.is_empty())
            .all(is_decimal)
    }

    fn num(&self, row: &[String], c: usize) -> Option<f64> {
        if blank(&row[c]) {
            None
        } else {
            Some(row[c].trim().parse().unwrap())
        }
    }
}

fn passes(t: &RefTable, row: &[String], c: usize, f: &RefFilter) -> bool {
    if blank(&row[c]) {
        return false;
    }
    match &f.lit {
        RefLit::Num(y) => {
            let x = t.num(row, c).unwrap();
            match f.op {
                "=" => x == *y,
                "!=" => x != *y,
                "<" => x < *y,
                "<=" => x <= *y,
                ">" => x > *y,
                ">=" => x >= *y,
                _ => false,
            }
        }
        RefLit::Text(y) => match f.op {
            "=" => row[c] == *y,
            "!=" => row[c] != *y,
            "CONTAINS" => row[c].contains(y.as_str()),
            _ => false,
        },
    }
}

fn aggregate(t: &RefTable, rows: &[&Vec<String>], func: &str, col: Option<usize>) -> Option<f64> {
    let Some(c) = col else {
        return Some(rows.len() as f64);
    };
    let present: Vec<&Vec<String>> = rows.iter().copied().filter(|r| !blank(&r[c])).collect();
    let nums = || present.iter().map(|r| t.num(r, c).unwrap());
    match func {
        "count" => Some(present.len() as f64),
        "sum" => Some(nums().fold(0.0, |a, b| a + b)),
        "mean" => (!present.is_empty()).then(|| nums().sum::<f64>() / present.len() as f64),
        "min" => nums().reduce(f64::min),
        "max" => nums().reduce(f64::max),
        "distinct_count" => {
            if t.numeric(c) {
                let mut v: Vec<f64> = nums().collect();
                v.sort_by(f64::total_cmp);
                v.dedup_by(|a, b| a == b);
                Some(v.len() as f64)
            } else {
                let mut v: Vec<&str> = present.iter().map(|r| r[c].as_str()).collect();
                v.sort();
                v.dedup();
                Some(v.len() as f64)
            }
        }
        other => panic!("unknown aggregate {other}"),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Key {
    Num(f64),
    Text(String),
    Blank,
}

fn key_order(a: &Key, b: &Key) -> Ordering {
    match (a, b) {
        (Key::Num(x), Key::Num(y)) => x.total_cmp(y),
        (Key::Text(x), Key::Text(y)) => x.as_bytes().cmp(y.as_bytes()),
        (Key::Blank, Key::Blank) => Ordering::Equal,
        (Key::Blank, _) => Ordering::Greater,
        (_, Key::Blank) => Ordering::Less,
        _ => unreachable!("one column has one type"),
    }
}

/// Evaluates `q` on `t`, or `Error` for anything the query language rejects
/// at evaluation time (unknown table or column, type mismatches).
pub fn evaluate(q: &RefQuery, t: &RefTable) -> RefResult {
    if q.table != t.id {
        return RefResult::Error;
    }
    let mut bound = Vec::new();
    for f in &q.filters {
        let Some(c) = t.col(&f.column) else {
            return RefResult::Error;
        };
        let numeric = t.numeric(c);
        let ok = match (&f.lit, f.op) {
            (RefLit::Num(_), "CONTAINS") | (RefLit::Text(_), "<" | "<=" | ">" | ">=") => false,
            (RefLit::Num(_), _) => numeric,
            (RefLit::Text(_), _) => !numeric,
        };
        if !ok {
            return RefResult::Error;
        }
        bound.push((c, f));
    }
    let col = match &q.column {
        Some(name) => match t.col(name) {
            Some(c) => {
                let needs_number = matches!(q.func, "mean" | "sum" | "min" | "max");
                if needs_number && !t.numeric(c) {
                    return RefResult::Error;
                }
                Some(c)
            }
            None => return RefResult::Error,
        },
        None if q.func == "count" => None,
        None => return RefResult::Error,
    };
    let group = match &q.group_by {
        Some(g) => match t.col(g) {
            Some(c) => Some(c),
            None => return RefResult::Error,
        },
        None => None,
    };
    let kept: Vec<&Vec<String>> = t
        .rows
        .iter()
        .filter(|r| bound.iter().all(|(c, f)| passes(t, r, *c, f)))
        .collect();
    let Some(g) = group else {
        return RefResult::Scalar(aggregate(t, &kept, q.func, col));
    };

    let numeric_key = t.numeric(g);
    let mut buckets: BTreeMap<String, (Key, Vec<&Vec<String>>)> = BTreeMap::new();
    for row in kept {
        let key = if blank(&row[g]) {
            Key::Blank
        } else if numeric_key {
            Key::Num(t.num(row, g).unwrap())
        } else {
            Key::Text(row[g].clone())
        };
        // numerically equal spellings such as "7" and "7.0" share a bucket
        let name = match &key {
            Key::Num(n) => format!("{}", n + 0.0),
            Key::Text(s) => s.clone(),
            Key::Blank => String::new(),
        };
        buckets.entry(name).or_insert((key, Vec::new())).1.push(row);
    }
    let mut groups: Vec<(Key, Option<String>, Option<f64>)> = buckets
        .into_iter()
        .map(|(name, (key, rows))| {
            let label = (key != Key::Blank).then_some(name);
            (key, label, aggregate(t, &rows, q.func, col))
        })
        .collect();
    groups.sort_by(|a, b| key_order(&a.0, &b.0));
    RefResult::Groups(groups.into_iter().map(|(_, k, v)| (k, v)).collect())
}

/// A small clinical-looking table with blanks in every column.
pub fn random_table(rng: &mut impl Rng, id: &str) -> RefTable {
    let regions = ["Ontario", "Quebec", "Alberta", "Nova Scotia", ""];
    let meds = ["Tylenol 2", "Tylenol 3", "Advil", "Tramadol", ""];
    let rows = (0..rng.random_range(0..40))
        .map(|_| {
            let age = rng.random_range(18..90).to_string();
            let score = format!("{:.2}", rng.random_range(-5.0..5.0));
            let days = rng.random_range(0..8).to_string();
            let mut row = vec![
                regions.choose(rng).unwrap().to_string(),
                meds.choose(rng).unwrap().to_string(),
                age,
                score,
                days,
            ];
            for cell in &mut row[2..] {
                if rng.random_bool(0.1) {
                    cell.clear();
                }
            }
            row
        })
        .collect();
    RefTable {
        id: id.into(),
        header: ["Region", "Medication", "Age", "Score", "Days"]
            .map(String::from)
            .to_vec(),
        rows,
    }
}

const OPS: [&str; 7] = ["=", "!=", "<", "<=", ">", ">=", "CONTAINS"];
const FUNCS: [&str; 6] = ["mean", "sum", "count", "min", "max", "distinct_count"];

/// A query over `t`'s columns. About one query in six is deliberately
/// ill-typed or names a missing column, so error agreement is exercised too.
pub fn random_query(rng: &mut impl Rng, t: &RefTable) -> RefQuery {
    let typed: Vec<bool> = (0..t.header.len()).map(|c| t.numeric(c)).collect();
    let pick = |rng: &mut dyn rand::RngCore, want_numeric: Option<bool>| -> String {
        if rng.random_bool(0.02) {
            return "Height".to_string();
        }
        let pool: Vec<usize> = (0..t.header.len())
            .filter(|c| want_numeric.is_none_or(|w| typed[*c] == w))
            .collect();
        let pool = if pool.is_empty() {
            (0..t.header.len()).collect()
        } else {
            pool
        };
        t.header[*pool.choose(rng).unwrap()].clone()
    };
    let sloppy = |rng: &mut dyn rand::RngCore| rng.random_bool(0.06);
    let filters = (0..rng.random_range(0..3))
        .map(|_| {
            let numeric = rng.random_bool(0.5);
            let want = (!sloppy(rng)).then_some(numeric);
            let column = pick(rng, want);
            let (lit, op) = if numeric {
                let ops = ["=", "!=", "<", "<=", ">", ">="];
                (
                    RefLit::Num(rng.random_range(0..80) as f64),
                    *ops.choose(rng).unwrap(),
                )
            } else {
                let words = ["Ontario", "Tylenol", "Tylenol 3", "a", "Quebec", ""];
                let ops = ["=", "!=", "CONTAINS"];
                (
                    RefLit::Text(words.choose(rng).unwrap().to_string()),
                    *ops.choose(rng).unwrap(),
                )
            };
            let op = if sloppy(rng) {
                *OPS.choose(rng).unwrap()
            } else {
                op
            };
            RefFilter { column, op, lit }
        })
        .collect();
    let func = *FUNCS.choose(rng).unwrap();
    let column = if func == "count" && rng.random_bool(0.5) {
        None
    } else {
        let needs_number = matches!(func, "mean" | "sum" | "min" | "max");
        let want = (needs_number && !sloppy(rng)).then_some(true);
        Some(pick(rng, want))
    };
    RefQuery {
        table: t.id.clone(),
        filters,
        group_by: rng.random_bool(0.5).then(|| pick(rng, None)),
        func,
        column,
    }
}
