pub mod error;
pub mod index;
pub mod ingest;
pub mod pipeline;
pub mod providers;
pub mod query;
pub mod replay;

pub use error::{Error, Result};
