//! Diversity-aware query answering: given a database, a query, a number `k`
//! and a threshold `d`, find `k` distinct answers whose aggregated pairwise
//! Hamming distance reaches `d`.

pub mod acq;
pub mod cqneg;
pub mod engine;
pub mod error;
pub mod io;
pub mod kernel;
pub mod model;
pub mod oracle;
pub mod outcome;
pub mod query;
pub mod structure;

pub use error::{Error, Result};
pub use model::{Aggregator, Assignment, Database, Payload, Score, Value, Var};
pub use outcome::{Outcome, SolveOptions, Target};
pub use query::{parse_query, Query};
