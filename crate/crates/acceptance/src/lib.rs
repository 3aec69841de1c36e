//! Independent oracles and harness helpers for the acceptance suite.
//!
//! Nothing here calls into the code under test for the value it checks: the
//! search oracle re-derives cosine scores and sorts everything, and the table
//! oracle has its own typing, filtering and aggregation.

pub mod fixtures;
pub mod live;
pub mod query_gen;
pub mod search_oracle;
pub mod table_oracle;

/// `|a - b| <= tol * max(|a|, |b|)`, with exact equality for zeros.
pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    if a == b {
        return true;
    }
    (a - b).abs() <= tol * a.abs().max(b.abs())
}
