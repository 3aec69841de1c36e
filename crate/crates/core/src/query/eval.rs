use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ast::{AggregateFn, Comparator, Filter, Literal, TableQuery};
use super::table::{Cell, ColumnType, Table};
use crate::error::{Error, Result};

/// A grouped or ungrouped aggregate. `None` values are missing (for example
/// the mean of zero cells).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryResult {
    Ungrouped(Option<f64>),
    Grouped(Vec<GroupValue>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupValue {
    pub key: Option<String>,
    pub value: Option<f64>,
}

fn fmt_value(v: Option<f64>) -> String {
    match v {
        Some(n) => format!("{n:?}"),
        None => "missing".into(),
    }
}

impl fmt::Display for QueryResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QueryResult::Ungrouped(v) => f.write_str(&fmt_value(*v)),
            QueryResult::Grouped(groups) => {
                let parts: Vec<String> = groups
                    .iter()
                    .map(|g| {
                        format!(
                            "{}: {}",
                            g.key.as_deref().unwrap_or("(missing)"),
                            fmt_value(g.value)
                        )
                    })
                    .collect();
                f.write_str(&parts.join("; "))
            }
        }
    }
}

struct BoundFilter<'a> {
    column: usize,
    filter: &'a Filter,
}

impl BoundFilter<'_> {
    fn passes(&self, row: &[Cell]) -> bool {
        let cell = &row[self.column];
        match (cell, &self.filter.literal) {
            (Cell::Missing, _) => false,
            (Cell::Number(x), Literal::Number(y)) => match self.filter.comparator {
                Comparator::Eq => x == y,
                Comparator::Ne => x != y,
                Comparator::Lt => x < y,
                Comparator::Le => x <= y,
                Comparator::Gt => x > y,
                Comparator::Ge => x >= y,
                Comparator::Contains => false,
            },
            (Cell::Text(x), Literal::Text(y)) => match self.filter.comparator {
                Comparator::Eq => x == y,
                Comparator::Ne => x != y,
                Comparator::Contains => x.contains(y.as_str()),
                _ => false,
            },
            _ => false,
        }
    }
}

fn resolve(table: &Table, name: &str) -> Result<usize> {
    table.column_index(name).ok_or_else(|| {
        Error::Eval(format!(
            "unknown column {name:?} in table {}",
            table.table_id
        ))
    })
}

fn check_filter(table: &Table, filter: &Filter) -> Result<usize> {
    let idx = resolve(table, &filter.column)?;
    let ty = table.columns[idx].ty;
    let literal_ty = match filter.literal {
        Literal::Number(_) => ColumnType::Number,
        Literal::Text(_) => ColumnType::Text,
    };
    let cmp = filter.comparator;
    if cmp.is_ordering() && ty != ColumnType::Number {
        return Err(Error::Eval(format!(
            "comparator {} needs a number column, {:?} is text",
            cmp.symbol(),
            filter.column
        )));
    }
    if cmp == Comparator::Contains && ty != ColumnType::Text {
        return Err(Error::Eval(format!(
            "CONTAINS needs a text column, {:?} is numeric",
            filter.column
        )));
    }
    if literal_ty != ty {
        return Err(Error::Eval(format!(
            "literal {} does not match the type of column {:?}",
            filter.literal, filter.column
        )));
    }
    Ok(idx)
}

fn sorted_numbers<'a>(cells: impl Iterator<Item = &'a Cell>) -> Vec<f64> {
    let mut values: Vec<f64> = cells.filter_map(Cell::as_number).collect();
    // fixed summation order keeps sums independent of row order
    values.sort_by(f64::total_cmp);
    values
}

fn aggregate(function: AggregateFn, rows: &[&[Cell]], column: Option<usize>) -> Option<f64> {
    let cells = || {
        rows.iter()
            .map(move |r| &r[column.expect("column checked")])
    };
    match function {
        AggregateFn::Count => Some(match column {
            None => rows.len() as f64,
            Some(_) => cells().filter(|c| !c.is_missing()).count() as f64,
        }),
        AggregateFn::Sum => Some(sorted_numbers(cells()).iter().sum()),
        AggregateFn::Mean => {
            let values = sorted_numbers(cells());
            if values.is_empty() {
                None
            } else {
                Some(values.iter().sum::<f64>() / values.len() as f64)
            }
        }
        AggregateFn::Min => sorted_numbers(cells()).first().copied(),
        AggregateFn::Max => sorted_numbers(cells()).last().copied(),
        AggregateFn::DistinctCount => {
            let distinct: HashSet<String> = cells()
                .filter(|c| !c.is_missing())
                .map(|c| match c {
                    Cell::Number(n) => format!("n:{}", (n + 0.0).to_bits()),
                    other => format!("t:{other}"),
                })
                .collect();
            Some(distinct.len() as f64)
        }
    }
}

/// Runs `query` against `table`. Filters are ANDed and missing cells fail
/// every comparator; aggregates skip missing cells.
pub fn evaluate(query: &TableQuery, table: &Table) -> Result<QueryResult> {
    if query.table_id != table.table_id {
        return Err(Error::Eval(format!(
            "query targets table {:?} but was given {:?}",
            query.table_id, table.table_id
        )));
    }
    let filters = query
        .filters
        .iter()
        .map(|f| {
            Ok(BoundFilter {
                column: check_filter(table, f)?,
                filter: f,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let function = query.aggregate.function;
    let agg_column = match &query.aggregate.column {
        Some(name) => {
            let idx = resolve(table, name)?;
            if function.requires_number() && table.columns[idx].ty != ColumnType::Number {
                return Err(Error::Eval(format!(
                    "{} needs a number column, {name:?} is text",
                    function.name()
                )));
            }
            Some(idx)
        }
        None if function == AggregateFn::Count => None,
        None => {
            return Err(Error::Eval(format!("{} needs a column", function.name())));
        }
    };
    let group_column = query
        .group_by
        .as_deref()
        .map(|g| resolve(table, g))
        .transpose()?;

    let passing: Vec<&[Cell]> = table
        .rows
        .iter()
        .map(Vec::as_slice)
        .filter(|row| filters.iter().all(|f| f.passes(row)))
        .collect();

    let Some(group_column) = group_column else {
        return Ok(QueryResult::Ungrouped(aggregate(
            function, &passing, agg_column,
        )));
    };

    let mut groups: Vec<(&Cell, Vec<&[Cell]>)> = Vec::new();
    for row in passing {
        let key = &row[group_column];
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, rows)) => rows.push(row),
            None => groups.push((key, vec![row])),
        }
    }
    groups.sort_by(|(a, _), (b, _)| a.key_cmp(b));
    Ok(QueryResult::Grouped(
        groups
            .into_iter()
            .map(|(key, rows)| GroupValue {
                key: (!key.is_missing()).then(|| key.to_string()),
                value: aggregate(function, &rows, agg_column),
            })
            .collect(),
    ))
}
