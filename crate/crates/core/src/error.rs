use std::fmt;

use crate::structure::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Position of a syntax error inside a text input (1-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Position {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("variable {0} is not bound in both assignments")]
    UnboundVariable(String),
    #[error("assignments disagree on variable {0}")]
    IncompatibleAssignments(String),
    #[error("syntax error at {pos}: {message}")]
    Syntax { pos: Position, message: String },
    #[error("unsafe query: variable {0} does not occur in a positive atom")]
    UnsafeQuery(String),
    #[error("rules have differing heads: {0}")]
    MismatchedHeads(String),
    #[error("negated literals are not allowed in a union of rules")]
    NegationInUnion,
    #[error("unknown relation {0}")]
    UnknownRelation(String),
    #[error("relation {relation} has arity {expected}, got {found} terms")]
    ArityMismatch {
        relation: String,
        expected: usize,
        found: usize,
    },
    #[error("exact tree decomposition search exceeded its budget of {0} nodes")]
    ExactSearchBudgetExceeded(u64),
    #[error("table at node {node} would exceed the cap of {cap} entries")]
    TableGuardExceeded { node: usize, cap: u64 },
    #[error("query is not acyclic")]
    NotAcyclic,
    #[error("corrupt provenance: {0}")]
    CorruptProvenance(String),
    #[error("reduction precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("aggregator {0} is not flagged monotone")]
    NotMonotone(String),
    #[error("search space of {count} candidate sets exceeds the budget of {budget}")]
    CombinatorialBudgetExceeded { count: u128, budget: u128 },
    #[error("vertex {vertex} has degree {degree} (at most 3 allowed)")]
    DegreeTooHigh { vertex: usize, degree: usize },
    #[error("graph is not bipartite and 3-regular: {0}")]
    NotBipartiteOrNot3Regular(String),
    #[error("unsupported query for this solver: {0}")]
    UnsupportedQuery(String),
    #[error("invalid decomposition: {0}")]
    InvalidDecomposition(Violation),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable code, used in JSON error reports.
    pub fn code(&self) -> &'static str {
        match self {
            Error::UnboundVariable(_) => "UnboundVariable",
            Error::IncompatibleAssignments(_) => "IncompatibleAssignments",
            Error::Syntax { .. } => "SyntaxError",
            Error::UnsafeQuery(_) => "UnsafeQuery",
            Error::MismatchedHeads(_) => "MismatchedHeads",
            Error::NegationInUnion => "NegationInUnion",
            Error::UnknownRelation(_) => "UnknownRelation",
            Error::ArityMismatch { .. } => "ArityMismatch",
            Error::ExactSearchBudgetExceeded(_) => "ExactSearchBudgetExceeded",
            Error::TableGuardExceeded { .. } => "TableGuardExceeded",
            Error::NotAcyclic => "NotAcyclic",
            Error::CorruptProvenance(_) => "CorruptProvenance",
            Error::PreconditionViolated(_) => "PreconditionViolated",
            Error::NotMonotone(_) => "NotMonotone",
            Error::CombinatorialBudgetExceeded { .. } => "CombinatorialBudgetExceeded",
            Error::DegreeTooHigh { .. } => "DegreeTooHigh",
            Error::NotBipartiteOrNot3Regular(_) => "NotBipartiteOrNot3Regular",
            Error::UnsupportedQuery(_) => "UnsupportedQuery",
            Error::InvalidDecomposition(_) => "InvalidDecomposition",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::Format { .. } => "FormatError",
            Error::Io(_) => "IoError",
        }
    }
}
