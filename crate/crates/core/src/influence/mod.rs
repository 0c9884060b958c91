//! Influence graphs and the local-independence calculus over them.
//!
//! Direct influence of `j` on `k` is an edge `j -> k`, derived syntactically
//! from the drift of `k`. Everything else (influence, blocking, dynamical
//! independence, faithfulness across nested systems) is read off the graph.

mod graph;
mod nested;
mod probe;
mod queries;

use thiserror::Error;

use crate::expr::EvalError;
use crate::model::{ModelError, ValidationReport};

pub use graph::{derive_graph, InfluenceGraph};
pub use nested::{
    faithfulness_across, instrumental_query, FaithfulnessReport, FaithfulnessViolation, InstabilityKind,
    UnstableInfluence,
};
pub use probe::{dependence_warnings, numeric_dependence_probe};
pub use queries::{Partition, QueryVerdict, Relation, Witness};

#[derive(Debug, Error, PartialEq)]
pub enum InfluenceError {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("relation is undefined between `{0}` and itself")]
    Diagonal(String),
    #[error("endpoint `{0}` cannot be in the blocking set")]
    EndpointBlocked(String),
    #[error("graphs {index} and {} are not nested: `{node}` is missing from the larger one", index + 1)]
    NotNested { index: usize, node: String },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("spec is not valid ({} violations)", .0.violations.len())]
    InvalidSpec(ValidationReport),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("evaluation failed: {0}")]
    Eval(#[from] EvalError),
}
