//! Rule-based subgoal completion detection, extra rewards and success-rate
//! counters.

mod observation;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::knowledge::{Change, SlotKey, SubgoalGraph, SubgoalId};

pub use observation::{ObservationParseError, TextObservation};

pub const DEFAULT_ALPHA: f64 = 0.2;

/// Object name → value. Inventory counts, vitals, and the number of visible
/// instances of each entity.
pub type ObjectSnapshot = BTreeMap<String, i64>;

/// Change between two snapshots. `appeared` maps each new object to its value
/// and `disappeared` maps each vanished object to its last value.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateDelta {
    pub changed: BTreeMap<String, i64>,
    pub appeared: BTreeMap<String, i64>,
    pub disappeared: BTreeMap<String, i64>,
}

impl StateDelta {
    pub fn is_empty(&self) -> bool {
        self.changed.is_empty() && self.appeared.is_empty() && self.disappeared.is_empty()
    }
}

pub fn extract_objects(obs: &TextObservation) -> ObjectSnapshot {
    let mut snap = ObjectSnapshot::new();
    for (item, n) in obs.inventory.iter().chain(obs.vitals.iter()) {
        *snap.entry(item.clone()).or_default() += i64::from(*n);
    }
    for name in &obs.visible {
        *snap.entry(name.clone()).or_default() += 1;
    }
    snap
}

pub fn diff(prev: &ObjectSnapshot, curr: &ObjectSnapshot) -> StateDelta {
    let mut delta = StateDelta::default();
    for (k, &v) in curr {
        match prev.get(k) {
            Some(&p) if p != v => {
                delta.changed.insert(k.clone(), v - p);
            }
            Some(_) => {}
            None => {
                delta.appeared.insert(k.clone(), v);
            }
        }
    }
    for (k, &p) in prev {
        if !curr.contains_key(k) {
            delta.disappeared.insert(k.clone(), p);
        }
    }
    delta
}

/// A numeric postcondition also accepts an object going from absent to
/// present (or the reverse), absent counting as zero.
fn change_satisfied(delta: &StateDelta, object: &str, change: Change) -> bool {
    match change {
        Change::Appear => delta.appeared.contains_key(object),
        Change::Disappear => delta.disappeared.contains_key(object),
        Change::Delta(n) if n > 0 => {
            delta.changed.get(object).is_some_and(|&c| c >= n)
                || delta.appeared.get(object).is_some_and(|&v| v >= n)
        }
        Change::Delta(n) => {
            delta.changed.get(object).is_some_and(|&c| c <= n)
                || delta.disappeared.get(object).is_some_and(|&v| v >= -n)
        }
    }
}

/// Plan subgoals whose every postcondition is satisfied by `delta`.
pub fn check_subgoals(
    delta: &StateDelta,
    plan: &[SubgoalId],
    graph: &SubgoalGraph,
) -> BTreeSet<SubgoalId> {
    plan.iter()
        .filter(|id| {
            graph.node(id.as_str()).is_some_and(|node| {
                !node.postconditions.is_empty()
                    && node
                        .postconditions
                        .iter()
                        .all(|p| change_satisfied(delta, &p.object, p.change))
            })
        })
        .cloned()
        .collect()
}

/// When achieved counts grow.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AchievedCountPolicy {
    /// Only the first detection of a subgoal under a plan counts, so
    /// achieved never exceeds planned.
    #[default]
    FirstPerPlan,
    /// Every detection counts; rates may exceed 1.
    EveryDetection,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrackerError {
    #[error("no active plan")]
    NoActivePlan,
    #[error("plan subgoal `{0}` is not in the graph")]
    UnknownSubgoal(String),
    #[error("plan lists `{0}` more than once")]
    DuplicateSubgoal(String),
    #[error("extra reward scale must be positive and finite, got {0}")]
    InvalidAlpha(f64),
}

/// Counter slots a planned subgoal is attributed to.
///
/// AND targets use their shared group slot. Other nodes use their root slot;
/// OR targets additionally credit the alternatives whose source was achieved
/// this episode, or every alternative when none was.
pub fn attribution_slots(
    graph: &SubgoalGraph,
    id: &SubgoalId,
    achieved: &BTreeSet<SubgoalId>,
) -> Vec<SlotKey> {
    if graph.and_group(id.as_str()).is_some() {
        return vec![SlotKey::AndGroup(id.clone())];
    }
    let mut slots = vec![SlotKey::Root(id.clone())];
    if let Some(alts) = graph.or_alternatives(id.as_str()) {
        let reached: Vec<&SubgoalId> = alts.iter().filter(|s| achieved.contains(*s)).collect();
        let chosen: Vec<&SubgoalId> = if reached.is_empty() {
            alts.iter().collect()
        } else {
            reached
        };
        slots.extend(chosen.into_iter().map(|s| SlotKey::OrEdge {
            source: s.clone(),
            target: id.clone(),
        }));
    }
    slots
}

/// Result of one tracker step.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrackerStep {
    pub extra_reward: f64,
    /// Plan subgoals matched this step, first time or not.
    pub achieved: BTreeSet<SubgoalId>,
    pub first_time: BTreeSet<SubgoalId>,
    pub delta: StateDelta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerState {
    alpha: f64,
    policy: AchievedCountPolicy,
    active_plan: Option<Vec<SubgoalId>>,
    first_achieved: BTreeMap<SubgoalId, bool>,
    credited: BTreeMap<SubgoalId, Vec<SlotKey>>,
    plan_extra: f64,
}

impl Default for TrackerState {
    fn default() -> Self {
        Self::new(DEFAULT_ALPHA, AchievedCountPolicy::default()).expect("default alpha is valid")
    }
}

impl TrackerState {
    pub fn new(alpha: f64, policy: AchievedCountPolicy) -> Result<Self, TrackerError> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(TrackerError::InvalidAlpha(alpha));
        }
        Ok(Self {
            alpha,
            policy,
            active_plan: None,
            first_achieved: BTreeMap::new(),
            credited: BTreeMap::new(),
            plan_extra: 0.0,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn active_plan(&self) -> Option<&[SubgoalId]> {
        self.active_plan.as_deref()
    }

    pub fn first_achieved(&self) -> &BTreeMap<SubgoalId, bool> {
        &self.first_achieved
    }

    pub fn is_achieved(&self, id: &str) -> bool {
        self.first_achieved.get(id).copied().unwrap_or(false)
    }

    /// Extra reward issued under the active plan so far.
    pub fn plan_extra_reward(&self) -> f64 {
        self.plan_extra
    }

    /// Activates `plan`, resets the first-achieved flags and bumps the
    /// planned count of each subgoal's slots. `achieved_this_episode` steers
    /// OR-edge attribution.
    pub fn new_plan(
        &mut self,
        plan: &[SubgoalId],
        graph: &mut SubgoalGraph,
        achieved_this_episode: &BTreeSet<SubgoalId>,
    ) -> Result<(), TrackerError> {
        let mut seen = BTreeSet::new();
        for id in plan {
            if !graph.contains(id.as_str()) {
                return Err(TrackerError::UnknownSubgoal(id.to_string()));
            }
            if !seen.insert(id) {
                return Err(TrackerError::DuplicateSubgoal(id.to_string()));
            }
        }
        self.credited.clear();
        for id in plan {
            let slots = attribution_slots(graph, id, achieved_this_episode);
            for slot in &slots {
                if let Some(c) = graph.counter_mut(slot) {
                    c.planned += 1;
                }
            }
            self.credited.insert(id.clone(), slots);
        }
        self.first_achieved = plan.iter().map(|id| (id.clone(), false)).collect();
        self.active_plan = Some(plan.to_vec());
        self.plan_extra = 0.0;
        Ok(())
    }

    pub fn step(
        &mut self,
        prev: &TextObservation,
        curr: &TextObservation,
        graph: &mut SubgoalGraph,
    ) -> Result<TrackerStep, TrackerError> {
        let plan = self
            .active_plan
            .as_ref()
            .ok_or(TrackerError::NoActivePlan)?;
        let delta = diff(&extract_objects(prev), &extract_objects(curr));
        let achieved = check_subgoals(&delta, plan, graph);
        let mut first_time = BTreeSet::new();
        for id in &achieved {
            let flag = self
                .first_achieved
                .get_mut(id)
                .expect("plan subgoals carry flags");
            let first = !*flag;
            *flag = true;
            if first {
                first_time.insert(id.clone());
            }
            if first || self.policy == AchievedCountPolicy::EveryDetection {
                for slot in self.credited.get(id).into_iter().flatten() {
                    if let Some(c) = graph.counter_mut(slot) {
                        c.achieved += 1;
                    }
                }
            }
        }
        let extra_reward = self.alpha * first_time.len() as f64;
        self.plan_extra += extra_reward;
        Ok(TrackerStep {
            extra_reward,
            achieved,
            first_time,
            delta,
        })
    }

    /// True when a plan is active and all of its subgoals have been achieved.
    pub fn all_achieved(&self) -> bool {
        self.active_plan.is_some() && self.first_achieved.values().all(|&f| f)
    }

    /// Drops the active plan and its flags; graph counters are untouched.
    pub fn clear_plan(&mut self) {
        self.active_plan = None;
        self.first_achieved.clear();
        self.credited.clear();
        self.plan_extra = 0.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snap(pairs: &[(&str, i64)]) -> ObjectSnapshot {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn extract_reads_every_section() {
        let obs = TextObservation {
            visible: vec!["tree".into(), "zombie".into(), "zombie".into()],
            inventory: vec![("wood".into(), 2)],
            vitals: vec![("health".into(), 9)],
            status: vec!["sleeping".into()],
        };
        assert_eq!(
            extract_objects(&obs),
            snap(&[("wood", 2), ("health", 9), ("tree", 1), ("zombie", 2)])
        );
        assert!(extract_objects(&TextObservation::default()).is_empty());
    }

    #[test]
    fn diff_examples() {
        let a = snap(&[("wood", 2)]);
        assert!(diff(&a, &a).is_empty());
        assert_eq!(
            diff(&a, &snap(&[("wood", 3)])).changed,
            snap(&[("wood", 1)])
        );
        assert_eq!(
            diff(&snap(&[]), &snap(&[("table", 1)])).appeared,
            snap(&[("table", 1)])
        );
        assert_eq!(diff(&a, &snap(&[])).disappeared, snap(&[("wood", 2)]));
    }

    #[test]
    fn alpha_must_be_positive() {
        assert!(TrackerState::new(0.0, AchievedCountPolicy::FirstPerPlan).is_err());
        assert!(TrackerState::new(f64::NAN, AchievedCountPolicy::FirstPerPlan).is_err());
        assert_eq!(TrackerState::default().alpha(), 0.2);
    }
}
