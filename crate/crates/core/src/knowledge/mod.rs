//! Subgoal graph and entity knowledge base: loading, validation,
//! verbalization, retrieval and offline extraction.

mod extract;
mod graph;
mod kb;
mod retrieval;
mod verbalize;

use std::fmt;

pub use extract::{extract_knowledge, ExtractionOutcome};
pub use graph::{
    load_graph, load_graph_unchecked, parse_graph_document, Change, Condition, Counter, Dependency,
    DependencyKind, GraphDocument, SlotKey, StateChangeSpec, SubgoalEntry, SubgoalGraph, SubgoalId,
    SubgoalNode,
};
pub use kb::{load_kb, parse_kb_document, EntityKb, EntityRecord, KbDocument};
pub use retrieval::{
    extract_entity_names, lookup_entities, render_details, render_entities, subgoal_details,
    EntityLookup, SubgoalDetail,
};
pub use verbalize::{parse_verbalized, verbalize, GRAPH_GRAMMAR};

#[derive(Debug, thiserror::Error)]
pub enum KnowledgeError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column} (field `{field}`): {message}")]
    Parse {
        line: usize,
        column: usize,
        field: String,
        message: String,
    },
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("invalid subgoal id `{0}` (expected lowercase letters, digits and underscores)")]
    InvalidId(String),
    #[error("graph failed validation:\n{0}")]
    Invalid(ValidationReport),
    #[error("unknown subgoal `{0}`")]
    UnknownSubgoal(String),
    #[error("verbalized graph is empty")]
    EmptyStructure,
    #[error("grammar violation at line {line}: {message}")]
    Grammar { line: usize, message: String },
    #[error("extraction requires at least one document")]
    NoDocuments,
    #[error("extraction backend failed: {0}")]
    Backend(#[from] crate::llm::LlmError),
    #[error("draft {path} is not a valid document: {message}")]
    DraftSchema { path: String, message: String },
}

/// One problem found by [`SubgoalGraph::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Finding {
    Cycle {
        nodes: Vec<SubgoalId>,
    },
    DanglingEndpoint {
        source: SubgoalId,
        target: SubgoalId,
    },
    UnknownTarget {
        target: SubgoalId,
    },
    MixedDependency {
        target: SubgoalId,
    },
    PreconditionWithoutEdge {
        node: SubgoalId,
        prerequisite: SubgoalId,
    },
    EdgeWithoutPrecondition {
        node: SubgoalId,
        prerequisite: SubgoalId,
    },
    UnknownRelatedSubgoal {
        entity: String,
        subgoal: SubgoalId,
    },
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::Cycle { nodes } => {
                let names: Vec<&str> = nodes.iter().map(SubgoalId::as_str).collect();
                write!(f, "cycle through {}", names.join(", "))
            }
            Finding::DanglingEndpoint { source, target } => {
                write!(f, "edge {source} -> {target} has an undeclared endpoint")
            }
            Finding::UnknownTarget { target } => {
                write!(f, "dependency on undeclared target {target}")
            }
            Finding::MixedDependency { target } => {
                write!(f, "{target} has both an AND group and OR alternatives")
            }
            Finding::PreconditionWithoutEdge { node, prerequisite } => write!(
                f,
                "{node} requires {prerequisite} but no incoming edge comes from it"
            ),
            Finding::EdgeWithoutPrecondition { node, prerequisite } => write!(
                f,
                "AND edge {prerequisite} -> {node} is not declared as a precondition of {node}"
            ),
            Finding::UnknownRelatedSubgoal { entity, subgoal } => {
                write!(f, "entity {entity} relates to unknown subgoal {subgoal}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.findings.is_empty() {
            return f.write_str("no findings");
        }
        for (i, finding) in self.findings.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "- {finding}")?;
        }
        Ok(())
    }
}

/// Convenience wrapper matching the free-function style used elsewhere.
pub fn validate_graph(graph: &SubgoalGraph) -> ValidationReport {
    graph.validate()
}
