//! Offline two-pass knowledge extraction into reviewable draft files.
//!
//! Pass one asks for subgoals with their attributes and dependencies; pass
//! two asks for entities, conditioned on the first pass. Drafts are written
//! in the same schema the loaders read, alongside a findings file whenever
//! validation complains. Drafts are never loaded into a live run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::graph::{parse_graph_document, SubgoalGraph};
use super::kb::{parse_kb_document, EntityKb};
use super::KnowledgeError;
use crate::llm::{ChatRequest, Gateway, Role};
use crate::template;

const SUBGOALS_SYSTEM: &str = include_str!("../../templates/extract_subgoals_system.txt");
const SUBGOALS_USER: &str = include_str!("../../templates/extract_subgoals_user.txt");
const ENTITIES_SYSTEM: &str = include_str!("../../templates/extract_entities_system.txt");
const ENTITIES_USER: &str = include_str!("../../templates/extract_entities_user.txt");

pub const GRAPH_DRAFT: &str = "graph_draft.json";
pub const KB_DRAFT: &str = "kb_draft.json";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractionOutcome {
    pub graph_draft: PathBuf,
    pub kb_draft: PathBuf,
    pub graph_findings: Vec<String>,
    pub kb_findings: Vec<String>,
}

impl ExtractionOutcome {
    pub fn is_clean(&self) -> bool {
        self.graph_findings.is_empty() && self.kb_findings.is_empty()
    }
}

/// Removes a surrounding Markdown code fence, if any.
fn strip_fence(text: &str) -> &str {
    let t = text.trim();
    let Some(body) = t.strip_prefix("```") else {
        return t;
    };
    let body = body.split_once('\n').map_or("", |(_, rest)| rest);
    body.trim_end().strip_suffix("```").unwrap_or(body).trim()
}

fn write(path: &Path, text: &str) -> Result<(), KnowledgeError> {
    std::fs::write(path, text).map_err(|e| KnowledgeError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn findings_path(draft: &Path) -> PathBuf {
    draft.with_extension("findings.txt")
}

fn write_findings(draft: &Path, findings: &[String]) -> Result<(), KnowledgeError> {
    let path = findings_path(draft);
    if findings.is_empty() {
        if path.exists() {
            std::fs::remove_file(&path).map_err(|e| KnowledgeError::Io {
                path: path.display().to_string(),
                source: e,
            })?;
        }
        return Ok(());
    }
    let mut text = findings
        .iter()
        .map(|f| format!("- {f}"))
        .collect::<Vec<_>>()
        .join("\n");
    text.push('\n');
    write(&path, &text)
}

fn render(tpl: &str, known: &[&str], values: &BTreeMap<&str, String>) -> String {
    template::render(tpl, known, values).expect("bundled extraction templates are well formed")
}

/// Runs both extraction passes and writes `graph_draft.json` and
/// `kb_draft.json` into `out_dir`.
pub fn extract_knowledge(
    docs: &[String],
    gateway: &mut Gateway,
    out_dir: &Path,
) -> Result<ExtractionOutcome, KnowledgeError> {
    if docs.is_empty() || docs.iter().all(|d| d.trim().is_empty()) {
        return Err(KnowledgeError::NoDocuments);
    }
    std::fs::create_dir_all(out_dir).map_err(|e| KnowledgeError::Io {
        path: out_dir.display().to_string(),
        source: e,
    })?;
    let documents = docs
        .iter()
        .enumerate()
        .map(|(i, d)| format!("[Document {}]\n{}", i + 1, d.trim()))
        .collect::<Vec<_>>()
        .join("\n\n");

    let graph_draft = out_dir.join(GRAPH_DRAFT);
    let kb_draft = out_dir.join(KB_DRAFT);

    let mut values = BTreeMap::new();
    values.insert("documents", documents);
    let user = render(SUBGOALS_USER, &["documents"], &values);
    let req = ChatRequest::new(Role::Extractor, SUBGOALS_SYSTEM, user)?.with_max_tokens(8192)?;
    let raw = gateway.complete(&req)?;
    let body = strip_fence(&raw);

    let doc = match parse_graph_document(body) {
        Ok(doc) => doc,
        Err(e) => {
            write(&graph_draft, &raw)?;
            write_findings(&graph_draft, &[e.to_string()])?;
            return Err(KnowledgeError::DraftSchema {
                path: graph_draft.display().to_string(),
                message: e.to_string(),
            });
        }
    };
    let canonical = doc.to_canonical_json();
    write(&graph_draft, &canonical)?;
    let (graph, graph_findings) = match SubgoalGraph::from_document(&doc) {
        Ok(g) => {
            let report = g.validate();
            let findings = report.findings.iter().map(ToString::to_string).collect();
            (Some(g), findings)
        }
        Err(e) => (None, vec![e.to_string()]),
    };
    write_findings(&graph_draft, &graph_findings)?;

    values.insert("subgoals", canonical);
    let user = render(ENTITIES_USER, &["documents", "subgoals"], &values);
    let req = ChatRequest::new(Role::Extractor, ENTITIES_SYSTEM, user)?.with_max_tokens(8192)?;
    let raw = gateway.complete(&req)?;
    let body = strip_fence(&raw);
    let kb_doc = match parse_kb_document(body) {
        Ok(doc) => doc,
        Err(e) => {
            write(&kb_draft, &raw)?;
            write_findings(&kb_draft, &[e.to_string()])?;
            return Err(KnowledgeError::DraftSchema {
                path: kb_draft.display().to_string(),
                message: e.to_string(),
            });
        }
    };
    write(&kb_draft, &kb_doc.to_canonical_json())?;
    let kb_findings = match EntityKb::from_document(&kb_doc) {
        Ok(kb) => match &graph {
            Some(g) => kb
                .validate_against(g)
                .findings
                .iter()
                .map(ToString::to_string)
                .collect(),
            None => Vec::new(),
        },
        Err(e) => vec![e.to_string()],
    };
    write_findings(&kb_draft, &kb_findings)?;

    Ok(ExtractionOutcome {
        graph_draft,
        kb_draft,
        graph_findings,
        kb_findings,
    })
}
