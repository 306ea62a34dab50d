//! Name-indexed entity knowledge base.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::graph::{SubgoalGraph, SubgoalId};
use super::{Finding, KnowledgeError, ValidationReport};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntityRecord {
    pub name: String,
    #[serde(rename = "type")]
    pub entity_type: String,
    pub description: String,
    #[serde(default)]
    pub related_subgoals: Vec<SubgoalId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KbDocument {
    pub entities: Vec<EntityRecord>,
}

impl KbDocument {
    pub fn to_canonical_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("kb document serializes");
        text.push('\n');
        text
    }
}

/// Entities keyed by lowercased name.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EntityKb {
    entries: BTreeMap<String, EntityRecord>,
}

impl EntityKb {
    pub fn from_document(doc: &KbDocument) -> Result<Self, KnowledgeError> {
        let mut entries = BTreeMap::new();
        for record in &doc.entities {
            let key = record.name.trim().to_lowercase();
            if key.is_empty() {
                return Err(KnowledgeError::Schema("entity with empty name".into()));
            }
            if entries.insert(key, record.clone()).is_some() {
                return Err(KnowledgeError::DuplicateId(record.name.clone()));
            }
        }
        Ok(Self { entries })
    }

    pub fn to_document(&self) -> KbDocument {
        KbDocument {
            entities: self.entries.values().cloned().collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&EntityRecord> {
        self.entries.get(&name.trim().to_lowercase())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn records(&self) -> impl Iterator<Item = &EntityRecord> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Checks that every related subgoal exists in `graph`.
    pub fn validate_against(&self, graph: &SubgoalGraph) -> ValidationReport {
        let findings = self
            .entries
            .values()
            .flat_map(|rec| {
                rec.related_subgoals
                    .iter()
                    .filter(|s| !graph.contains(s.as_str()))
                    .map(|s| Finding::UnknownRelatedSubgoal {
                        entity: rec.name.clone(),
                        subgoal: s.clone(),
                    })
            })
            .collect();
        ValidationReport { findings }
    }
}

pub fn parse_kb_document(text: &str) -> Result<KbDocument, KnowledgeError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|err| {
        let path = err.path().to_string();
        let inner = err.into_inner();
        KnowledgeError::Parse {
            line: inner.line(),
            column: inner.column(),
            field: path,
            message: inner.to_string(),
        }
    })
}

pub fn load_kb(path: &Path) -> Result<EntityKb, KnowledgeError> {
    let text = std::fs::read_to_string(path).map_err(|e| KnowledgeError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    EntityKb::from_document(&parse_kb_document(&text)?)
}
