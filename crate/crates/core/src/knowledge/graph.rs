//! Subgoal graph: nodes, AND-groups, OR-edges and success-rate slots.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Finding, KnowledgeError, ValidationReport};

/// Lowercase snake-case subgoal identifier such as `collect_wood`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SubgoalId(String);

impl SubgoalId {
    pub fn new(name: impl Into<String>) -> Result<Self, KnowledgeError> {
        let name = name.into();
        if Self::is_valid(&name) {
            Ok(Self(name))
        } else {
            Err(KnowledgeError::InvalidId(name))
        }
    }

    pub fn is_valid(name: &str) -> bool {
        !name.is_empty()
            && name
                .chars()
                .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for SubgoalId {
    type Error = KnowledgeError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<SubgoalId> for String {
    fn from(id: SubgoalId) -> Self {
        id.0
    }
}

impl fmt::Display for SubgoalId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::borrow::Borrow<str> for SubgoalId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

/// A prerequisite that must hold before a subgoal is attemptable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Condition {
    SubgoalAchieved(SubgoalId),
    InventoryAtLeast { item: String, amount: u32 },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCondition {
    kind: String,
    subject: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    amount: Option<u32>,
}

impl Serialize for Condition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let raw = match self {
            Condition::SubgoalAchieved(id) => RawCondition {
                kind: "subgoal_achieved".into(),
                subject: id.to_string(),
                amount: None,
            },
            Condition::InventoryAtLeast { item, amount } => RawCondition {
                kind: "inventory_at_least".into(),
                subject: item.clone(),
                amount: Some(*amount),
            },
        };
        raw.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Condition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let raw = RawCondition::deserialize(d)?;
        match (raw.kind.as_str(), raw.amount) {
            ("subgoal_achieved", None) => SubgoalId::new(raw.subject)
                .map(Condition::SubgoalAchieved)
                .map_err(D::Error::custom),
            ("subgoal_achieved", Some(_)) => Err(D::Error::custom(
                "amount is only allowed for inventory_at_least",
            )),
            ("inventory_at_least", Some(amount)) if !raw.subject.is_empty() => {
                Ok(Condition::InventoryAtLeast {
                    item: raw.subject,
                    amount,
                })
            }
            ("inventory_at_least", Some(_)) => Err(D::Error::custom("empty inventory subject")),
            ("inventory_at_least", None) => {
                Err(D::Error::custom("inventory_at_least requires an amount"))
            }
            (other, _) => Err(D::Error::custom(format!(
                "unknown condition kind `{other}`"
            ))),
        }
    }
}

/// How an observed object changes when a subgoal completes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Change {
    /// Signed, nonzero numeric change.
    Delta(i64),
    Appear,
    Disappear,
}

impl Serialize for Change {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Change::Delta(n) => s.serialize_i64(*n),
            Change::Appear => s.serialize_str("appear"),
            Change::Disappear => s.serialize_str("disappear"),
        }
    }
}

impl<'de> Deserialize<'de> for Change {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(i64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(0) => Err(D::Error::custom("delta must be nonzero")),
            Raw::Num(n) => Ok(Change::Delta(n)),
            Raw::Word(w) if w == "appear" => Ok(Change::Appear),
            Raw::Word(w) if w == "disappear" => Ok(Change::Disappear),
            Raw::Word(w) => Err(D::Error::custom(format!("unknown change `{w}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateChangeSpec {
    pub object: String,
    pub change: Change,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DependencyKind {
    And,
    Or,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dependency {
    pub kind: DependencyKind,
    pub sources: Vec<SubgoalId>,
}

/// One subgoal entry as stored in a graph file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubgoalEntry {
    pub id: SubgoalId,
    pub description: String,
    #[serde(default)]
    pub preconditions: Vec<Condition>,
    #[serde(default)]
    pub postconditions: Vec<StateChangeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dependency: Option<Dependency>,
    /// Free-form reviewer note carried through drafts and fixtures.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub review: Option<String>,
}

/// On-disk graph document.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphDocument {
    pub subgoals: Vec<SubgoalEntry>,
}

impl GraphDocument {
    pub fn to_canonical_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("graph document serializes");
        text.push('\n');
        text
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubgoalNode {
    pub id: SubgoalId,
    pub description: String,
    pub preconditions: Vec<Condition>,
    pub postconditions: Vec<StateChangeSpec>,
    pub review: Option<String>,
}

/// Identifies one success-rate counter.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SlotKey {
    Root(SubgoalId),
    AndGroup(SubgoalId),
    OrEdge {
        source: SubgoalId,
        target: SubgoalId,
    },
}

/// Planned / achieved counts behind a success-rate weight.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counter {
    pub planned: u64,
    pub achieved: u64,
}

impl Counter {
    /// Success rate, or `None` while nothing has been planned.
    pub fn rate(&self) -> Option<f64> {
        (self.planned > 0).then(|| self.achieved as f64 / self.planned as f64)
    }

    /// Nearest integer percent, half rounded up.
    pub fn percent(&self) -> Option<u64> {
        (self.planned > 0).then(|| (self.achieved * 200 + self.planned) / (self.planned * 2))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SubgoalGraph {
    nodes: BTreeMap<SubgoalId, SubgoalNode>,
    and_groups: BTreeMap<SubgoalId, BTreeSet<SubgoalId>>,
    or_edges: BTreeMap<SubgoalId, Vec<SubgoalId>>,
    weights: BTreeMap<SlotKey, Counter>,
}

impl SubgoalGraph {
    /// Builds a graph from a document, rejecting structural schema violations
    /// (duplicate ids, dangling endpoints, empty dependency lists). Semantic
    /// problems such as cycles are left for [`SubgoalGraph::validate`].
    pub fn from_document(doc: &GraphDocument) -> Result<Self, KnowledgeError> {
        let mut graph = SubgoalGraph::default();
        for entry in &doc.subgoals {
            if graph.nodes.contains_key(&entry.id) {
                return Err(KnowledgeError::DuplicateId(entry.id.to_string()));
            }
            graph.nodes.insert(
                entry.id.clone(),
                SubgoalNode {
                    id: entry.id.clone(),
                    description: entry.description.clone(),
                    preconditions: entry.preconditions.clone(),
                    postconditions: entry.postconditions.clone(),
                    review: entry.review.clone(),
                },
            );
        }
        for entry in &doc.subgoals {
            let Some(dep) = &entry.dependency else {
                continue;
            };
            if dep.sources.is_empty() {
                return Err(KnowledgeError::Schema(format!(
                    "subgoal `{}` declares a dependency without sources",
                    entry.id
                )));
            }
            for source in &dep.sources {
                if !graph.nodes.contains_key(source) {
                    return Err(KnowledgeError::Schema(format!(
                        "edge {source} -> {} references undeclared subgoal `{source}`",
                        entry.id
                    )));
                }
            }
            match dep.kind {
                DependencyKind::And => {
                    let set: BTreeSet<_> = dep.sources.iter().cloned().collect();
                    if set.len() != dep.sources.len() {
                        return Err(KnowledgeError::Schema(format!(
                            "subgoal `{}` lists an AND source twice",
                            entry.id
                        )));
                    }
                    graph.and_groups.insert(entry.id.clone(), set);
                }
                DependencyKind::Or => {
                    let mut seen = BTreeSet::new();
                    if !dep.sources.iter().all(|s| seen.insert(s)) {
                        return Err(KnowledgeError::Schema(format!(
                            "subgoal `{}` lists an OR alternative twice",
                            entry.id
                        )));
                    }
                    graph.or_edges.insert(entry.id.clone(), dep.sources.clone());
                }
            }
        }
        graph.reset_weights();
        Ok(graph)
    }

    /// Builds a structure-only graph (no descriptions or conditions).
    pub fn from_structure(
        nodes: impl IntoIterator<Item = SubgoalId>,
        and_groups: BTreeMap<SubgoalId, BTreeSet<SubgoalId>>,
        or_edges: BTreeMap<SubgoalId, Vec<SubgoalId>>,
    ) -> Self {
        let nodes = nodes
            .into_iter()
            .map(|id| {
                let node = SubgoalNode {
                    id: id.clone(),
                    description: String::new(),
                    preconditions: Vec::new(),
                    postconditions: Vec::new(),
                    review: None,
                };
                (id, node)
            })
            .collect();
        let mut graph = SubgoalGraph {
            nodes,
            and_groups,
            or_edges,
            weights: BTreeMap::new(),
        };
        graph.reset_weights();
        graph
    }

    pub fn to_document(&self) -> GraphDocument {
        let subgoals = self
            .nodes
            .values()
            .map(|node| {
                let dependency = if let Some(group) = self.and_groups.get(&node.id) {
                    Some(Dependency {
                        kind: DependencyKind::And,
                        sources: group.iter().cloned().collect(),
                    })
                } else {
                    self.or_edges.get(&node.id).map(|alts| Dependency {
                        kind: DependencyKind::Or,
                        sources: alts.clone(),
                    })
                };
                SubgoalEntry {
                    id: node.id.clone(),
                    description: node.description.clone(),
                    preconditions: node.preconditions.clone(),
                    postconditions: node.postconditions.clone(),
                    dependency,
                    review: node.review.clone(),
                }
            })
            .collect();
        GraphDocument { subgoals }
    }

    /// Resets every slot counter to (0, 0).
    pub fn reset_weights(&mut self) {
        self.weights = self
            .slot_keys()
            .into_iter()
            .map(|k| (k, Counter::default()))
            .collect();
    }

    /// All slots that exist for this structure.
    pub fn slot_keys(&self) -> Vec<SlotKey> {
        let mut keys: Vec<SlotKey> = self.roots().into_iter().map(SlotKey::Root).collect();
        keys.extend(self.and_groups.keys().cloned().map(SlotKey::AndGroup));
        for (target, sources) in &self.or_edges {
            keys.extend(sources.iter().map(|s| SlotKey::OrEdge {
                source: s.clone(),
                target: target.clone(),
            }));
        }
        keys.sort();
        keys
    }

    pub fn nodes(&self) -> &BTreeMap<SubgoalId, SubgoalNode> {
        &self.nodes
    }

    pub fn node(&self, id: &str) -> Option<&SubgoalNode> {
        self.nodes.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &SubgoalId> {
        self.nodes.keys()
    }

    pub fn and_groups(&self) -> &BTreeMap<SubgoalId, BTreeSet<SubgoalId>> {
        &self.and_groups
    }

    pub fn or_edges(&self) -> &BTreeMap<SubgoalId, Vec<SubgoalId>> {
        &self.or_edges
    }

    pub fn and_group(&self, target: &str) -> Option<&BTreeSet<SubgoalId>> {
        self.and_groups.get(target)
    }

    pub fn or_alternatives(&self, target: &str) -> Option<&[SubgoalId]> {
        self.or_edges.get(target).map(Vec::as_slice)
    }

    /// Nodes without a mandatory (AND) prerequisite. OR alternatives only
    /// describe enabling paths, so an OR target is still a root.
    pub fn roots(&self) -> Vec<SubgoalId> {
        self.nodes
            .keys()
            .filter(|id| !self.and_groups.contains_key(*id))
            .cloned()
            .collect()
    }

    pub fn is_root(&self, id: &str) -> bool {
        self.nodes.contains_key(id) && !self.and_groups.contains_key(id)
    }

    /// Every (source, target) edge, AND and OR alike.
    pub fn edges(&self) -> Vec<(SubgoalId, SubgoalId)> {
        let mut edges: Vec<_> = self
            .and_groups
            .iter()
            .flat_map(|(t, ss)| ss.iter().map(move |s| (s.clone(), t.clone())))
            .chain(
                self.or_edges
                    .iter()
                    .flat_map(|(t, ss)| ss.iter().map(move |s| (s.clone(), t.clone()))),
            )
            .collect();
        edges.sort();
        edges
    }

    /// Sources of every incoming edge of `id`.
    pub fn predecessors(&self, id: &str) -> Vec<SubgoalId> {
        let mut out: Vec<SubgoalId> = self
            .and_groups
            .get(id)
            .into_iter()
            .flatten()
            .chain(self.or_edges.get(id).into_iter().flatten())
            .cloned()
            .collect();
        out.sort();
        out.dedup();
        out
    }

    pub fn successors(&self, id: &str) -> Vec<SubgoalId> {
        let mut out: Vec<SubgoalId> = self
            .edges()
            .into_iter()
            .filter(|(s, _)| s.as_str() == id)
            .map(|(_, t)| t)
            .collect();
        out.dedup();
        out
    }

    /// Longest-path depth over AND edges; roots sit at depth 0. Requires an
    /// acyclic AND structure, returns `None` otherwise.
    pub fn depths(&self) -> Option<BTreeMap<SubgoalId, usize>> {
        let mut depth: BTreeMap<SubgoalId, usize> = BTreeMap::new();
        let mut remaining: Vec<&SubgoalId> = self.nodes.keys().collect();
        while !remaining.is_empty() {
            let before = remaining.len();
            remaining.retain(|id| match self.and_groups.get(*id) {
                None => {
                    depth.insert((*id).clone(), 0);
                    false
                }
                Some(group) => {
                    let known: Option<Vec<usize>> =
                        group.iter().map(|s| depth.get(s).copied()).collect();
                    match known {
                        Some(ds) => {
                            depth.insert((*id).clone(), 1 + ds.into_iter().max().unwrap_or(0));
                            false
                        }
                        None => true,
                    }
                }
            });
            if remaining.len() == before {
                return None;
            }
        }
        Some(depth)
    }

    pub fn weights(&self) -> &BTreeMap<SlotKey, Counter> {
        &self.weights
    }

    pub fn counter(&self, key: &SlotKey) -> Option<Counter> {
        self.weights.get(key).copied()
    }

    pub fn counter_mut(&mut self, key: &SlotKey) -> Option<&mut Counter> {
        self.weights.get_mut(key)
    }

    /// Runs every structural and consistency check and returns the findings.
    pub fn validate(&self) -> ValidationReport {
        let mut findings = Vec::new();

        for (target, group) in &self.and_groups {
            if self.or_edges.contains_key(target) {
                findings.push(Finding::MixedDependency {
                    target: target.clone(),
                });
            }
            for s in group {
                if !self.nodes.contains_key(s) {
                    findings.push(Finding::DanglingEndpoint {
                        source: s.clone(),
                        target: target.clone(),
                    });
                }
            }
        }
        for (target, alts) in &self.or_edges {
            for s in alts {
                if !self.nodes.contains_key(s) {
                    findings.push(Finding::DanglingEndpoint {
                        source: s.clone(),
                        target: target.clone(),
                    });
                }
            }
        }
        for t in self.and_groups.keys().chain(self.or_edges.keys()) {
            if !self.nodes.contains_key(t) {
                findings.push(Finding::UnknownTarget { target: t.clone() });
            }
        }

        if let Some(cycle) = self.find_cycle() {
            findings.push(Finding::Cycle { nodes: cycle });
        }

        for node in self.nodes.values() {
            let incoming: BTreeSet<SubgoalId> =
                self.predecessors(node.id.as_str()).into_iter().collect();
            let required: BTreeSet<&SubgoalId> = node
                .preconditions
                .iter()
                .filter_map(|c| match c {
                    Condition::SubgoalAchieved(s) => Some(s),
                    Condition::InventoryAtLeast { .. } => None,
                })
                .collect();
            for s in &required {
                if !incoming.contains(*s) {
                    findings.push(Finding::PreconditionWithoutEdge {
                        node: node.id.clone(),
                        prerequisite: (*s).clone(),
                    });
                }
            }
            if let Some(group) = self.and_groups.get(&node.id) {
                for s in group {
                    if !required.contains(s) {
                        findings.push(Finding::EdgeWithoutPrecondition {
                            node: node.id.clone(),
                            prerequisite: s.clone(),
                        });
                    }
                }
            }
        }
        ValidationReport { findings }
    }

    /// Structural subset of [`SubgoalGraph::validate`]: cycles, endpoints and
    /// mixed dependencies, ignoring node conditions.
    pub fn validate_structure(&self) -> ValidationReport {
        let findings = self
            .validate()
            .findings
            .into_iter()
            .filter(|f| {
                !matches!(
                    f,
                    Finding::PreconditionWithoutEdge { .. }
                        | Finding::EdgeWithoutPrecondition { .. }
                )
            })
            .collect();
        ValidationReport { findings }
    }

    /// Depth-first search over all edges; returns the nodes of one cycle.
    fn find_cycle(&self) -> Option<Vec<SubgoalId>> {
        let mut succ: BTreeMap<&SubgoalId, Vec<&SubgoalId>> = BTreeMap::new();
        let groups = self
            .and_groups
            .iter()
            .map(|(t, ss)| (t, ss.iter().collect::<Vec<_>>()))
            .chain(
                self.or_edges
                    .iter()
                    .map(|(t, ss)| (t, ss.iter().collect::<Vec<_>>())),
            );
        for (target, sources) in groups {
            for s in sources {
                succ.entry(s).or_default().push(target);
            }
        }
        for targets in succ.values_mut() {
            targets.sort();
            targets.dedup();
        }

        // 0 = unvisited, 1 = on stack, 2 = finished
        let mut state: BTreeMap<&SubgoalId, u8> = BTreeMap::new();
        let starts: BTreeSet<&SubgoalId> = succ.keys().copied().collect();
        for start in starts {
            if state.get(start).copied().unwrap_or(0) != 0 {
                continue;
            }
            let mut stack: Vec<(&SubgoalId, usize)> = vec![(start, 0)];
            state.insert(start, 1);
            while let Some((node, idx)) = stack.last().copied() {
                let next = succ.get(node).and_then(|v| v.get(idx)).copied();
                match next {
                    Some(child) => {
                        stack.last_mut().expect("non-empty").1 += 1;
                        match state.get(child).copied().unwrap_or(0) {
                            0 => {
                                state.insert(child, 1);
                                stack.push((child, 0));
                            }
                            1 => {
                                let pos = stack
                                    .iter()
                                    .position(|(n, _)| *n == child)
                                    .expect("on stack");
                                let mut cycle: Vec<SubgoalId> =
                                    stack[pos..].iter().map(|(n, _)| (*n).clone()).collect();
                                cycle.sort();
                                return Some(cycle);
                            }
                            _ => {}
                        }
                    }
                    None => {
                        state.insert(node, 2);
                        stack.pop();
                    }
                }
            }
        }
        None
    }
}

/// Parses a graph document, reporting the failing line/column and field path.
pub fn parse_graph_document(text: &str) -> Result<GraphDocument, KnowledgeError> {
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

/// Reads and structurally builds a graph without running [`SubgoalGraph::validate`].
pub fn load_graph_unchecked(path: &Path) -> Result<SubgoalGraph, KnowledgeError> {
    let text = std::fs::read_to_string(path).map_err(|e| KnowledgeError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    SubgoalGraph::from_document(&parse_graph_document(&text)?)
}

/// Loads a graph file and rejects it unless validation reports zero findings.
/// Counters start at (0, 0).
pub fn load_graph(path: &Path) -> Result<SubgoalGraph, KnowledgeError> {
    let graph = load_graph_unchecked(path)?;
    let report = graph.validate();
    if report.is_clean() {
        Ok(graph)
    } else {
        Err(KnowledgeError::Invalid(report))
    }
}
