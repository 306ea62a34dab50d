//! Retrieval of subgoal details and entity records for prompt context.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;

use super::graph::{Change, Condition, StateChangeSpec, SubgoalGraph, SubgoalId};
use super::kb::{EntityKb, EntityRecord};
use super::KnowledgeError;

/// Name, description, preconditions and postconditions of one subgoal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubgoalDetail {
    pub id: SubgoalId,
    pub description: String,
    pub preconditions: Vec<String>,
    pub postconditions: Vec<String>,
    /// Hops from the nearest requested id (0 for requested ids).
    pub distance: usize,
}

fn describe_condition(c: &Condition) -> String {
    match c {
        Condition::SubgoalAchieved(s) => format!("{s} achieved"),
        Condition::InventoryAtLeast { item, amount } => format!("{item} >= {amount}"),
    }
}

fn describe_change(c: &StateChangeSpec) -> String {
    match c.change {
        Change::Delta(n) if n > 0 => format!("{} +{n}", c.object),
        Change::Delta(n) => format!("{} {n}", c.object),
        Change::Appear => format!("{} appears", c.object),
        Change::Disappear => format!("{} disappears", c.object),
    }
}

/// Details for `ids` plus every node within `hops` edges in either direction,
/// ordered by distance then id.
pub fn subgoal_details<'a>(
    graph: &SubgoalGraph,
    ids: impl IntoIterator<Item = &'a str>,
    hops: usize,
) -> Result<Vec<SubgoalDetail>, KnowledgeError> {
    let mut distance: BTreeMap<SubgoalId, usize> = BTreeMap::new();
    let mut queue = VecDeque::new();
    for id in ids {
        let node = graph
            .node(id)
            .ok_or_else(|| KnowledgeError::UnknownSubgoal(id.to_string()))?;
        if distance.insert(node.id.clone(), 0).is_none() {
            queue.push_back(node.id.clone());
        }
    }
    while let Some(id) = queue.pop_front() {
        let d = distance[&id];
        if d == hops {
            continue;
        }
        for next in graph
            .predecessors(id.as_str())
            .into_iter()
            .chain(graph.successors(id.as_str()))
        {
            if !distance.contains_key(&next) {
                distance.insert(next.clone(), d + 1);
                queue.push_back(next);
            }
        }
    }
    let mut out: Vec<SubgoalDetail> = distance
        .into_iter()
        .map(|(id, distance)| {
            let node = graph.node(id.as_str()).expect("reached nodes exist");
            SubgoalDetail {
                description: node.description.clone(),
                preconditions: node.preconditions.iter().map(describe_condition).collect(),
                postconditions: node.postconditions.iter().map(describe_change).collect(),
                id,
                distance,
            }
        })
        .collect();
    out.sort_by(|a, b| (a.distance, &a.id).cmp(&(b.distance, &b.id)));
    Ok(out)
}

pub fn render_details(details: &[SubgoalDetail]) -> String {
    details
        .iter()
        .map(|d| {
            let pre = if d.preconditions.is_empty() {
                "none".to_string()
            } else {
                d.preconditions.join(", ")
            };
            format!(
                "{}: {} Preconditions: {}. Postconditions: {}.",
                d.id,
                d.description,
                pre,
                d.postconditions.join(", ")
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EntityLookup {
    pub found: Vec<EntityRecord>,
    pub unknown: Vec<String>,
}

/// Looks up each name; names missing from the KB land in `unknown`.
pub fn lookup_entities<'a>(
    kb: &EntityKb,
    names: impl IntoIterator<Item = &'a str>,
) -> EntityLookup {
    let mut lookup = EntityLookup::default();
    let names: BTreeSet<&str> = names.into_iter().collect();
    for name in names {
        match kb.get(name) {
            Some(rec) => lookup.found.push(rec.clone()),
            None => lookup.unknown.push(name.to_string()),
        }
    }
    lookup
}

pub fn render_entities(records: &[EntityRecord]) -> String {
    if records.is_empty() {
        return "none".to_string();
    }
    records
        .iter()
        .map(|r| {
            let related: Vec<&str> = r.related_subgoals.iter().map(SubgoalId::as_str).collect();
            let related = if related.is_empty() {
                "none".to_string()
            } else {
                related.join(", ")
            };
            format!(
                "{} ({}): {} Related subgoals: {}.",
                r.name, r.entity_type, r.description, related
            )
        })
        .collect::<Vec<_>>()
        .join("; ")
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

/// Case-insensitive longest-match scan of `text` for KB entity names. Names
/// match only on word boundaries; a longer match consumes its span, so
/// `stone_pickaxe` does not also yield `stone` unless `stone` appears
/// separately.
pub fn extract_entity_names(text: &str, kb: &EntityKb) -> BTreeSet<String> {
    let haystack = text.to_ascii_lowercase();
    let bytes = haystack.as_bytes();
    let mut names: Vec<&str> = kb.names().collect();
    names.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));

    let mut found = BTreeSet::new();
    let mut i = 0;
    while i < bytes.len() {
        let at_start = i == 0 || !is_word_byte(bytes[i - 1]);
        if !at_start || !is_word_byte(bytes[i]) {
            i += 1;
            continue;
        }
        let hit = names.iter().find(|name| {
            let end = i + name.len();
            bytes[i..].starts_with(name.as_bytes())
                && (end == bytes.len() || !is_word_byte(bytes[end]))
        });
        match hit {
            Some(name) => {
                found.insert(
                    kb.get(name)
                        .map(|r| r.name.clone())
                        .unwrap_or_else(|| name.to_string()),
                );
                i += name.len();
            }
            None => {
                while i < bytes.len() && is_word_byte(bytes[i]) {
                    i += 1;
                }
            }
        }
    }
    found
}
