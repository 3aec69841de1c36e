use serde::{Deserialize, Serialize};

use super::ast::{Aggregate, AggregateFn, Comparator, Filter, Literal, TableQuery, KEYWORDS};

/// Where parsing stopped and what it wanted there. `position` is a character
/// offset into the input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("parse error at offset {position}: expected {expected}, found {found}")]
pub struct ParseError {
    pub position: usize,
    pub expected: String,
    pub found: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    QuotedIdent(String),
    Str(String),
    Number(f64),
    Op(Comparator),
    LParen,
    RParen,
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    pos: usize,
    text: String,
}

fn lex(input: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = input.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    let text = |a: usize, b: usize| chars[a..b].iter().collect::<String>();

    while i < chars.len() {
        let c = chars[i];
        let start = i;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let tok = if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            Tok::Word(text(start, i))
        } else if c.is_ascii_digit()
            || ((c == '-' || c == '+' || c == '.')
                && chars
                    .get(i + 1)
                    .is_some_and(|n| n.is_ascii_digit() || *n == '.'))
        {
            if c == '-' || c == '+' {
                i += 1;
            }
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i < chars.len() && chars[i] == '.' {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let raw = text(start, i);
            match super::table::parse_decimal(&raw) {
                Some(n) => Tok::Number(n),
                None => {
                    return Err(ParseError {
                        position: start,
                        expected: "number".into(),
                        found: raw,
                    })
                }
            }
        } else if c == '\'' || c == '"' {
            i += 1;
            let mut value = String::new();
            loop {
                match chars.get(i) {
                    None => {
                        return Err(ParseError {
                            position: start,
                            expected: format!("closing {c}"),
                            found: "end of input".into(),
                        })
                    }
                    Some(&q) if q == c => {
                        if chars.get(i + 1) == Some(&c) {
                            value.push(c);
                            i += 2;
                        } else {
                            i += 1;
                            break;
                        }
                    }
                    Some(&other) => {
                        value.push(other);
                        i += 1;
                    }
                }
            }
            if c == '\'' {
                Tok::Str(value)
            } else {
                Tok::QuotedIdent(value)
            }
        } else {
            let two = chars.get(i + 1).copied();
            let (op, len) = match (c, two) {
                ('!', Some('=')) => (Some(Comparator::Ne), 2),
                ('<', Some('=')) => (Some(Comparator::Le), 2),
                ('>', Some('=')) => (Some(Comparator::Ge), 2),
                ('=', _) => (Some(Comparator::Eq), 1),
                ('<', _) => (Some(Comparator::Lt), 1),
                ('>', _) => (Some(Comparator::Gt), 1),
                _ => (None, 1),
            };
            i += len;
            match (op, c) {
                (Some(op), _) => Tok::Op(op),
                (None, '(') => Tok::LParen,
                (None, ')') => Tok::RParen,
                (None, _) => {
                    return Err(ParseError {
                        position: start,
                        expected: "token".into(),
                        found: c.to_string(),
                    })
                }
            }
        };
        tokens.push(Token {
            tok,
            pos: start,
            text: text(start, i),
        });
    }
    tokens.push(Token {
        tok: Tok::Eof,
        pos: chars.len(),
        text: "end of input".into(),
    });
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.at]
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.at].clone();
        if self.at + 1 < self.tokens.len() {
            self.at += 1;
        }
        t
    }

    fn error(&self, expected: impl Into<String>) -> ParseError {
        let t = self.peek();
        ParseError {
            position: t.pos,
            expected: expected.into(),
            found: t.text.clone(),
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Word(w) if w.eq_ignore_ascii_case(kw))
    }

    fn keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.at_keyword(kw) {
            self.bump();
            Ok(())
        } else {
            Err(self.error(kw.to_ascii_uppercase()))
        }
    }

    fn identifier(&mut self, what: &str) -> Result<String, ParseError> {
        match &self.peek().tok {
            Tok::Word(w) if !KEYWORDS.contains(&w.to_ascii_lowercase().as_str()) => {
                let w = w.clone();
                self.bump();
                Ok(w)
            }
            Tok::QuotedIdent(q) if !q.is_empty() => {
                let q = q.clone();
                self.bump();
                Ok(q)
            }
            _ => Err(self.error(what)),
        }
    }

    fn comparator(&mut self) -> Result<Comparator, ParseError> {
        match &self.peek().tok {
            Tok::Op(op) => {
                let op = *op;
                self.bump();
                Ok(op)
            }
            Tok::Word(w) if w.eq_ignore_ascii_case("contains") => {
                self.bump();
                Ok(Comparator::Contains)
            }
            _ => Err(self.error("comparator (=, !=, <, <=, >, >=, CONTAINS)")),
        }
    }

    fn literal(&mut self) -> Result<Literal, ParseError> {
        let lit = match &self.peek().tok {
            Tok::Number(n) => Literal::Number(*n),
            Tok::Str(s) => Literal::Text(s.clone()),
            _ => return Err(self.error("literal (number or 'quoted text')")),
        };
        self.bump();
        Ok(lit)
    }

    fn filter(&mut self) -> Result<Filter, ParseError> {
        let column = self.identifier("column identifier")?;
        let comparator = self.comparator()?;
        let literal = self.literal()?;
        Ok(Filter {
            column,
            comparator,
            literal,
        })
    }

    fn query(&mut self) -> Result<TableQuery, ParseError> {
        self.keyword("from")?;
        let table_id = self.identifier("table identifier")?;

        let mut filters = Vec::new();
        if self.at_keyword("where") {
            self.bump();
            filters.push(self.filter()?);
            while self.at_keyword("and") {
                self.bump();
                filters.push(self.filter()?);
            }
        }

        let mut group_by = None;
        if self.at_keyword("group") {
            self.bump();
            self.keyword("by")?;
            group_by = Some(self.identifier("column identifier")?);
        }

        if !self.at_keyword("select") {
            let expected = match (filters.is_empty(), group_by.is_some()) {
                (_, true) => "SELECT",
                (true, false) => "WHERE, GROUP BY or SELECT",
                (false, false) => "AND, GROUP BY or SELECT",
            };
            return Err(self.error(expected));
        }
        self.bump();

        let function = match &self.peek().tok {
            Tok::Word(w) => AggregateFn::from_name(w),
            _ => None,
        }
        .ok_or_else(|| {
            self.error("aggregate function name (mean, sum, count, min, max, distinct_count)")
        })?;
        self.bump();

        if self.peek().tok != Tok::LParen {
            return Err(self.error("("));
        }
        self.bump();
        let column = if self.peek().tok == Tok::RParen && function == AggregateFn::Count {
            None
        } else {
            Some(self.identifier("column identifier")?)
        };
        if self.peek().tok != Tok::RParen {
            return Err(self.error(")"));
        }
        self.bump();

        if self.peek().tok != Tok::Eof {
            return Err(self.error("end of input"));
        }

        Ok(TableQuery {
            table_id,
            filters,
            group_by,
            aggregate: Aggregate { function, column },
        })
    }
}

/// Parses one query. Every input yields either a query or a located error.
pub fn parse_query(input: &str) -> Result<TableQuery, ParseError> {
    let tokens = lex(input)?;
    Parser { tokens, at: 0 }.query()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_of_age() {
        let q = parse_query("FROM survey SELECT mean(Age)").unwrap();
        assert_eq!(q.table_id, "survey");
        assert!(q.filters.is_empty());
        assert_eq!(q.group_by, None);
        assert_eq!(
            q.aggregate,
            Aggregate {
                function: AggregateFn::Mean,
                column: Some("Age".into())
            }
        );
    }

    #[test]
    fn filter_group_count() {
        let q = parse_query("FROM t WHERE Province = 'ON' GROUP BY Sex SELECT count()").unwrap();
        assert_eq!(
            q.filters,
            vec![Filter {
                column: "Province".into(),
                comparator: Comparator::Eq,
                literal: Literal::Text("ON".into()),
            }]
        );
        assert_eq!(q.group_by.as_deref(), Some("Sex"));
        assert_eq!(q.aggregate.function, AggregateFn::Count);
        assert_eq!(q.aggregate.column, None);
    }

    #[test]
    fn unknown_function_is_located() {
        let err = parse_query("FROM t SELECT avg(Age)").unwrap_err();
        assert_eq!(err.position, 14);
        assert_eq!(err.found, "avg");
        assert!(err.expected.contains("aggregate function name"));
    }

    #[test]
    fn keywords_case_insensitive_and_quoting() {
        let q = parse_query(
            "from \"pain survey\" where \"Age Group\" >= -3.5 and Name contains 'O''Brien' group by Sex select MAX(\"Age Group\")",
        )
        .unwrap();
        assert_eq!(q.table_id, "pain survey");
        assert_eq!(q.filters[0].literal, Literal::Number(-3.5));
        assert_eq!(q.filters[1].comparator, Comparator::Contains);
        assert_eq!(q.filters[1].literal, Literal::Text("O'Brien".into()));
        assert_eq!(q.aggregate.function, AggregateFn::Max);
        assert_eq!(parse_query(&q.to_string()).unwrap(), q);
    }

    #[test]
    fn column_required_except_count() {
        let err = parse_query("FROM t SELECT mean()").unwrap_err();
        assert_eq!(err.expected, "column identifier");
        assert_eq!(err.position, 19);
        assert!(parse_query("FROM t SELECT count(Age)").is_ok());
    }

    #[test]
    fn errors_carry_positions() {
        let cases = [
            ("", 0, "FROM"),
            ("FROM", 4, "table identifier"),
            ("FROM t", 6, "WHERE, GROUP BY or SELECT"),
            (
                "FROM t WHERE a",
                14,
                "comparator (=, !=, <, <=, >, >=, CONTAINS)",
            ),
            (
                "FROM t WHERE a = b",
                17,
                "literal (number or 'quoted text')",
            ),
            ("FROM t SELECT count() x", 22, "end of input"),
            ("FROM t WHERE a = 'open", 17, "closing '"),
            ("FROM select SELECT count()", 5, "table identifier"),
            ("FROM t GROUP Sex SELECT count()", 13, "BY"),
        ];
        for (input, pos, expected) in cases {
            let err = parse_query(input).unwrap_err();
            assert_eq!(
                (err.position, err.expected.as_str()),
                (pos, expected),
                "{input}"
            );
            assert!(err.position <= input.chars().count());
        }
    }

    #[test]
    fn positions_count_characters_not_bytes() {
        let err = parse_query("FROM \"ü\" SELECT avg(x)").unwrap_err();
        assert_eq!(err.position, 16);
    }
}
