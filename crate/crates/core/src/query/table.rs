use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnType {
    Number,
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub ty: ColumnType,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Number(f64),
    Text(String),
    Missing,
}

impl Cell {
    pub fn is_missing(&self) -> bool {
        matches!(self, Cell::Missing)
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Cell::Number(n) => Some(*n),
            _ => None,
        }
    }

    /// Total order used for group keys: numbers numerically, text byte-wise,
    /// missing last.
    pub fn key_cmp(&self, other: &Cell) -> Ordering {
        match (self, other) {
            (Cell::Number(a), Cell::Number(b)) => a.total_cmp(b),
            (Cell::Text(a), Cell::Text(b)) => a.cmp(b),
            (Cell::Missing, Cell::Missing) => Ordering::Equal,
            (Cell::Missing, _) => Ordering::Greater,
            (_, Cell::Missing) => Ordering::Less,
            (Cell::Number(_), Cell::Text(_)) => Ordering::Less,
            (Cell::Text(_), Cell::Number(_)) => Ordering::Greater,
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            // -0 prints as 0
            Cell::Number(n) => write!(f, "{}", n + 0.0),
            Cell::Text(s) => f.write_str(s),
            Cell::Missing => f.write_str(""),
        }
    }
}

/// Decimal number with optional sign and fraction. No exponents, no locale.
pub fn parse_decimal(s: &str) -> Option<f64> {
    let s = s.trim();
    let digits = s.strip_prefix(['+', '-']).unwrap_or(s);
    let (int, frac) = match digits.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (digits, None),
    };
    let all_digits = |p: &str| p.bytes().all(|b| b.is_ascii_digit());
    let valid = all_digits(int)
        && frac.is_none_or(all_digits)
        && (!int.is_empty() || frac.is_some_and(|f| !f.is_empty()));
    if !valid {
        return None;
    }
    s.parse().ok()
}

/// An immutable, typed table loaded from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub table_id: String,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    /// Loads CSV content whose first row is the header. A column is numeric
    /// iff every non-empty cell parses as a decimal number.
    pub fn from_csv(table_id: impl Into<String>, content: &str) -> Result<Table> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(content.as_bytes());
        let mut records = reader.records();

        let header = match records.next() {
            Some(r) => r.map_err(|e| Error::TableLoad {
                row: 0,
                message: e.to_string(),
            })?,
            None => {
                return Err(Error::TableLoad {
                    row: 0,
                    message: "missing header row".into(),
                })
            }
        };
        let names: Vec<String> = header.iter().map(|h| h.trim().to_string()).collect();
        let mut seen = HashSet::new();
        for name in &names {
            if name.is_empty() {
                return Err(Error::TableLoad {
                    row: 0,
                    message: "empty column name".into(),
                });
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::TableLoad {
                    row: 0,
                    message: format!("duplicate column name {name:?}"),
                });
            }
        }

        let mut raw_rows: Vec<Vec<String>> = Vec::new();
        for (i, record) in records.enumerate() {
            let row = i + 1;
            let record = record.map_err(|e| Error::TableLoad {
                row,
                message: e.to_string(),
            })?;
            if record.len() != names.len() {
                return Err(Error::TableLoad {
                    row,
                    message: format!("expected {} cells, found {}", names.len(), record.len()),
                });
            }
            raw_rows.push(record.iter().map(str::to_string).collect());
        }

        let columns: Vec<Column> = names
            .into_iter()
            .enumerate()
            .map(|(c, name)| {
                let numeric = raw_rows
                    .iter()
                    .map(|r| r[c].trim())
                    .filter(|v| !v.is_empty())
                    .all(|v| parse_decimal(v).is_some());
                Column {
                    name,
                    ty: if numeric {
                        ColumnType::Number
                    } else {
                        ColumnType::Text
                    },
                }
            })
            .collect();

        let rows = raw_rows
            .into_iter()
            .map(|raw| {
                raw.into_iter()
                    .zip(&columns)
                    .map(|(v, col)| {
                        if v.trim().is_empty() {
                            Cell::Missing
                        } else if col.ty == ColumnType::Number {
                            Cell::Number(parse_decimal(&v).expect("checked during inference"))
                        } else {
                            Cell::Text(v)
                        }
                    })
                    .collect()
            })
            .collect();

        Ok(Table {
            table_id: table_id.into(),
            columns,
            rows,
        })
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn header(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_column() {
        let t = Table::from_csv("t", "Age\n20\n30").unwrap();
        assert_eq!(t.columns[0].ty, ColumnType::Number);
        assert_eq!(
            t.rows,
            vec![vec![Cell::Number(20.0)], vec![Cell::Number(30.0)]]
        );
    }

    #[test]
    fn one_bad_cell_makes_text() {
        let t = Table::from_csv("t", "Age\n20\nN/A-ish-text").unwrap();
        assert_eq!(t.columns[0].ty, ColumnType::Text);
        assert_eq!(t.rows[0][0], Cell::Text("20".into()));
    }

    #[test]
    fn ragged_row_is_located() {
        let err = Table::from_csv("t", "A,B\n1\n").unwrap_err();
        assert!(matches!(err, Error::TableLoad { row: 1, .. }), "{err}");
    }

    #[test]
    fn duplicate_header() {
        assert!(matches!(
            Table::from_csv("t", "A,A\n1,2"),
            Err(Error::TableLoad { row: 0, .. })
        ));
    }

    #[test]
    fn empty_cells_are_missing_and_quotes_unescape() {
        let t = Table::from_csv("t", "Name,Age\n\"Smith, J\",\n\"say \"\"hi\"\"\",4").unwrap();
        assert_eq!(t.columns[1].ty, ColumnType::Number);
        assert_eq!(
            t.rows[0],
            vec![Cell::Text("Smith, J".into()), Cell::Missing]
        );
        assert_eq!(t.rows[1][0], Cell::Text("say \"hi\"".into()));
    }

    #[test]
    fn decimal_grammar() {
        for ok in ["1", "-1", "+2.5", ".5", "3.", "007"] {
            assert!(parse_decimal(ok).is_some(), "{ok}");
        }
        for bad in ["", "-", ".", "1e5", "inf", "NaN", "1,000", "1.2.3", "0x10"] {
            assert!(parse_decimal(bad).is_none(), "{bad}");
        }
    }
}
