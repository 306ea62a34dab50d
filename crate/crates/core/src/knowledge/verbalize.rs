//! Layered text rendering of a subgoal graph and its inverse.
//!
//! Line 0 lists the roots. An AND group sits on the line equal to its
//! target's depth; an OR edge sits one line below its source's depth.
//! Entries inside a line are sorted by target, then by sources.

use std::collections::{BTreeMap, BTreeSet};

use super::graph::{Counter, SlotKey, SubgoalGraph, SubgoalId};
use super::KnowledgeError;

/// Description of the line grammar, substituted into prompt system texts.
pub const GRAPH_GRAMMAR: &str = include_str!("../../templates/graph_grammar.txt");

struct Entry {
    target: SubgoalId,
    sources: Vec<SubgoalId>,
    slot: SlotKey,
}

fn weight_suffix(counter: Option<Counter>) -> String {
    match counter.and_then(|c| c.percent()) {
        Some(p) => format!(" ({p}%)"),
        None => " (-%)".to_string(),
    }
}

/// Renders the graph one depth layer per line.
pub fn verbalize(graph: &SubgoalGraph, include_weights: bool) -> Result<String, KnowledgeError> {
    let structural = graph.validate_structure();
    if !structural.is_clean() {
        return Err(KnowledgeError::Invalid(structural));
    }
    let depths = graph
        .depths()
        .ok_or_else(|| KnowledgeError::Invalid(graph.validate()))?;
    if graph.is_empty() {
        return Ok(String::new());
    }

    let mut layers: BTreeMap<usize, Vec<Entry>> = BTreeMap::new();
    for (target, group) in graph.and_groups() {
        layers.entry(depths[target]).or_default().push(Entry {
            target: target.clone(),
            sources: group.iter().cloned().collect(),
            slot: SlotKey::AndGroup(target.clone()),
        });
    }
    for (target, alternatives) in graph.or_edges() {
        for source in alternatives {
            layers.entry(depths[source] + 1).or_default().push(Entry {
                target: target.clone(),
                sources: vec![source.clone()],
                slot: SlotKey::OrEdge {
                    source: source.clone(),
                    target: target.clone(),
                },
            });
        }
    }

    let mut lines = Vec::new();
    let roots: Vec<String> = graph
        .roots()
        .into_iter()
        .map(|r| {
            let mut text = r.to_string();
            if include_weights {
                text.push_str(&weight_suffix(graph.counter(&SlotKey::Root(r))));
            }
            text
        })
        .collect();
    lines.push(roots.join("; "));

    let deepest = layers.keys().next_back().copied().unwrap_or(0);
    for layer in 1..=deepest {
        let mut entries = layers.remove(&layer).unwrap_or_default();
        entries.sort_by(|a, b| (&a.target, &a.sources).cmp(&(&b.target, &b.sources)));
        let rendered: Vec<String> = entries
            .iter()
            .map(|e| {
                let lhs: Vec<&str> = e.sources.iter().map(SubgoalId::as_str).collect();
                let mut text = format!("{} -> {}", lhs.join(" & "), e.target);
                if include_weights {
                    text.push_str(&weight_suffix(graph.counter(&e.slot)));
                }
                text
            })
            .collect();
        lines.push(rendered.join("; "));
    }
    Ok(lines.join("\n"))
}

fn strip_weight(entry: &str) -> &str {
    let trimmed = entry.trim();
    if let Some(body) = trimmed.strip_suffix("%)") {
        if let Some(open) = body.rfind('(') {
            let inner = &body[open + 1..];
            if inner == "-" || (!inner.is_empty() && inner.chars().all(|c| c.is_ascii_digit())) {
                return body[..open].trim_end();
            }
        }
    }
    trimmed
}

fn parse_id(text: &str, line: usize) -> Result<SubgoalId, KnowledgeError> {
    let text = text.trim();
    if text.is_empty() {
        return Err(KnowledgeError::Grammar {
            line,
            message: "empty subgoal name".into(),
        });
    }
    SubgoalId::new(text).map_err(|_| KnowledgeError::Grammar {
        line,
        message: format!("`{text}` is not a valid subgoal name"),
    })
}

/// Parses the layered text back into a structure-only graph. Line numbers in
/// errors are 1-based.
pub fn parse_verbalized(text: &str) -> Result<SubgoalGraph, KnowledgeError> {
    let lines: Vec<&str> = text.trim_end().lines().collect();
    if lines.is_empty() || lines.iter().all(|l| l.trim().is_empty()) {
        return Err(KnowledgeError::EmptyStructure);
    }

    let mut roots = BTreeSet::new();
    for entry in lines[0].split(';') {
        let body = strip_weight(entry);
        if body.contains("->") || body.contains('&') {
            return Err(KnowledgeError::Grammar {
                line: 1,
                message: format!("root layer contains an edge `{}`", entry.trim()),
            });
        }
        if !roots.insert(parse_id(body, 1)?) {
            return Err(KnowledgeError::Grammar {
                line: 1,
                message: format!("root `{body}` listed twice"),
            });
        }
    }

    // (layer, target, sources)
    let mut raw: Vec<(usize, SubgoalId, Vec<SubgoalId>)> = Vec::new();
    for (idx, line) in lines.iter().enumerate().skip(1) {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            return Err(KnowledgeError::Grammar {
                line: line_no,
                message: "empty layer".into(),
            });
        }
        for entry in line.split(';') {
            let body = strip_weight(entry);
            let Some((lhs, rhs)) = body.split_once("->") else {
                return Err(KnowledgeError::Grammar {
                    line: line_no,
                    message: format!("expected `->` in `{}`", entry.trim()),
                });
            };
            if rhs.contains("->") {
                return Err(KnowledgeError::Grammar {
                    line: line_no,
                    message: format!("chained arrows in `{}`", entry.trim()),
                });
            }
            let target = parse_id(rhs, line_no)?;
            let sources = lhs
                .split('&')
                .map(|s| parse_id(s, line_no))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| KnowledgeError::Grammar {
                    line: line_no,
                    message: format!("malformed conjunct in `{}`", entry.trim()),
                })?;
            raw.push((idx, target, sources));
        }
    }

    let mut nodes: BTreeSet<SubgoalId> = roots.clone();
    let mut and_groups: BTreeMap<SubgoalId, BTreeSet<SubgoalId>> = BTreeMap::new();
    let mut or_edges: BTreeMap<SubgoalId, Vec<SubgoalId>> = BTreeMap::new();
    for (layer, target, sources) in &raw {
        let line = layer + 1;
        nodes.insert(target.clone());
        nodes.extend(sources.iter().cloned());
        if sources.len() == 1 && roots.contains(target) {
            let alts = or_edges.entry(target.clone()).or_default();
            if alts.contains(&sources[0]) {
                return Err(KnowledgeError::Grammar {
                    line,
                    message: format!("edge {} -> {target} listed twice", sources[0]),
                });
            }
            alts.push(sources[0].clone());
            continue;
        }
        if roots.contains(target) {
            return Err(KnowledgeError::Grammar {
                line,
                message: format!("root `{target}` cannot be the target of an AND group"),
            });
        }
        let set: BTreeSet<SubgoalId> = sources.iter().cloned().collect();
        if set.len() != sources.len() {
            return Err(KnowledgeError::Grammar {
                line,
                message: format!("repeated conjunct for `{target}`"),
            });
        }
        if and_groups.insert(target.clone(), set).is_some() {
            return Err(KnowledgeError::Grammar {
                line,
                message: format!("`{target}` has more than one AND group"),
            });
        }
    }
    for alts in or_edges.values_mut() {
        alts.sort();
    }
    for node in &nodes {
        if !roots.contains(node) && !and_groups.contains_key(node) {
            return Err(KnowledgeError::Grammar {
                line: 1,
                message: format!(
                    "`{node}` is neither listed as a root nor the target of an AND group"
                ),
            });
        }
    }

    let graph = SubgoalGraph::from_structure(nodes, and_groups, or_edges);
    let structural = graph.validate_structure();
    if !structural.is_clean() {
        return Err(KnowledgeError::Invalid(structural));
    }
    let depths = graph
        .depths()
        .ok_or_else(|| KnowledgeError::Invalid(graph.validate_structure()))?;
    for (layer, target, sources) in &raw {
        let expected = if sources.len() == 1 && roots.contains(target) {
            depths[&sources[0]] + 1
        } else {
            depths[target]
        };
        if expected != *layer {
            return Err(KnowledgeError::Grammar {
                line: layer + 1,
                message: format!("entry for `{target}` belongs on line {}", expected + 1),
            });
        }
    }
    Ok(graph)
}
