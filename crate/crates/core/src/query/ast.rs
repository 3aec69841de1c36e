use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "contains")]
    Contains,
}

impl Comparator {
    pub const ALL: [Comparator; 7] = [
        Comparator::Eq,
        Comparator::Ne,
        Comparator::Lt,
        Comparator::Le,
        Comparator::Gt,
        Comparator::Ge,
        Comparator::Contains,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Eq => "=",
            Comparator::Ne => "!=",
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::Gt => ">",
            Comparator::Ge => ">=",
            Comparator::Contains => "CONTAINS",
        }
    }

    pub fn is_ordering(self) -> bool {
        matches!(
            self,
            Comparator::Lt | Comparator::Le | Comparator::Gt | Comparator::Ge
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregateFn {
    Mean,
    Sum,
    Count,
    Min,
    Max,
    DistinctCount,
}

impl AggregateFn {
    pub const ALL: [AggregateFn; 6] = [
        AggregateFn::Mean,
        AggregateFn::Sum,
        AggregateFn::Count,
        AggregateFn::Min,
        AggregateFn::Max,
        AggregateFn::DistinctCount,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AggregateFn::Mean => "mean",
            AggregateFn::Sum => "sum",
            AggregateFn::Count => "count",
            AggregateFn::Min => "min",
            AggregateFn::Max => "max",
            AggregateFn::DistinctCount => "distinct_count",
        }
    }

    pub fn from_name(name: &str) -> Option<AggregateFn> {
        let lower = name.to_ascii_lowercase();
        Self::ALL.into_iter().find(|f| f.name() == lower)
    }

    /// Functions that only make sense over number columns.
    pub fn requires_number(self) -> bool {
        matches!(
            self,
            AggregateFn::Mean | AggregateFn::Sum | AggregateFn::Min | AggregateFn::Max
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Literal {
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Filter {
    pub column: String,
    pub comparator: Comparator,
    pub literal: Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub function: AggregateFn,
    pub column: Option<String>,
}

/// `FROM <table> [WHERE ...] [GROUP BY <col>] SELECT <fn>(<col>?)`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableQuery {
    pub table_id: String,
    pub filters: Vec<Filter>,
    pub group_by: Option<String>,
    pub aggregate: Aggregate,
}

pub(crate) const KEYWORDS: [&str; 7] =
    ["from", "where", "and", "group", "by", "select", "contains"];

fn is_bare_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !KEYWORDS.contains(&s.to_ascii_lowercase().as_str())
}

pub(crate) struct Ident<'a>(pub &'a str);

impl fmt::Display for Ident<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if is_bare_identifier(self.0) {
            f.write_str(self.0)
        } else {
            write!(f, "\"{}\"", self.0.replace('"', "\"\""))
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Number(n) => write!(f, "{n}"),
            Literal::Text(s) => write!(f, "'{}'", s.replace('\'', "''")),
        }
    }
}

/// Canonical text form; parsing it yields an equal query.
impl fmt::Display for TableQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FROM {}", Ident(&self.table_id))?;
        for (i, filter) in self.filters.iter().enumerate() {
            let joiner = if i == 0 { "WHERE" } else { "AND" };
            write!(
                f,
                " {joiner} {} {} {}",
                Ident(&filter.column),
                filter.comparator.symbol(),
                filter.literal
            )?;
        }
        if let Some(group) = &self.group_by {
            write!(f, " GROUP BY {}", Ident(group))?;
        }
        write!(f, " SELECT {}(", self.aggregate.function.name())?;
        if let Some(col) = &self.aggregate.column {
            write!(f, "{}", Ident(col))?;
        }
        f.write_str(")")
    }
}
