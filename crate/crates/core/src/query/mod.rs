//! A closed aggregation language over CSV tables.
//!
//! ```text
//! FROM <table> [WHERE <col> <cmp> <lit> {AND <col> <cmp> <lit>}] [GROUP BY <col>] SELECT <fn>(<col>?)
//! ```
//!
//! Keywords are case-insensitive, identifiers may be double-quoted, text
//! literals are single-quoted. Comparators: `= != < <= > >= CONTAINS`.
//! Functions: `mean sum count min max distinct_count`.

mod ast;
mod eval;
mod parser;
mod table;

use std::collections::BTreeMap;
use std::sync::Arc;

pub use ast::{Aggregate, AggregateFn, Comparator, Filter, Literal, TableQuery};
pub use eval::{evaluate, GroupValue, QueryResult};
pub use parser::{parse_query, ParseError};
pub use table::{parse_decimal, Cell, Column, ColumnType, Table};

use crate::error::{Error, Result};

/// Registered tables, addressable by table id or by knowledge-base path.
#[derive(Debug, Default, Clone)]
pub struct TableCatalog {
    tables: BTreeMap<String, Arc<Table>>,
    by_path: BTreeMap<String, String>,
}

impl TableCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, source_path: impl Into<String>, table: Table) -> Result<()> {
        if self.tables.contains_key(&table.table_id) {
            return Err(Error::InvalidTable(format!(
                "table {} is already registered",
                table.table_id
            )));
        }
        self.by_path
            .insert(source_path.into(), table.table_id.clone());
        self.tables.insert(table.table_id.clone(), Arc::new(table));
        Ok(())
    }

    pub fn get(&self, table_id: &str) -> Option<Arc<Table>> {
        self.tables.get(table_id).cloned()
    }

    pub fn by_source_path(&self, path: &str) -> Option<Arc<Table>> {
        self.by_path.get(path).and_then(|id| self.get(id))
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    pub fn table_ids(&self) -> impl Iterator<Item = &str> {
        self.tables.keys().map(String::as_str)
    }

    /// Parses and evaluates a query against the registered table it names.
    pub fn run(&self, query: &str) -> Result<QueryResult> {
        let parsed = parse_query(query)?;
        let table = self
            .get(&parsed.table_id)
            .ok_or_else(|| Error::Eval(format!("unknown table {:?}", parsed.table_id)))?;
        evaluate(&parsed, &table)
    }
}
