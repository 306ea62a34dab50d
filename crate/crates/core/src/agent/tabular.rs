//! Epsilon-greedy value table over (coarse features, macro target).

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scripted::{macro_step, NextStep};
use super::{ready_subgoals, Policy, PolicyInput, Transition};
use crate::gridcraft::{Action, World};
use crate::knowledge::{SubgoalGraph, SubgoalId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TabularConfig {
    pub epsilon: f64,
    pub learning_rate: f64,
    pub discount: f64,
    /// Maximum primitive steps one macro may run.
    pub macro_budget: u32,
}

impl Default for TabularConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            learning_rate: 0.5,
            discount: 0.9,
            macro_budget: 40,
        }
    }
}

/// Coarse state key: held items with counts clipped at 2, plus whether a
/// table is within reach.
pub fn features(world: &World) -> String {
    let items: Vec<String> = world
        .inventory()
        .iter()
        .filter(|(_, &n)| n > 0)
        .map(|(k, &n)| format!("{k}{}", n.min(2)))
        .collect();
    format!("{}|table={}", items.join(","), world.nearby("table"))
}

#[derive(Debug, Clone)]
pub struct TabularLearner {
    config: TabularConfig,
    rng: ChaCha8Rng,
    table: BTreeMap<(String, SubgoalId), f64>,
}

impl TabularLearner {
    pub fn new(config: TabularConfig, seed: u64) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            config,
            rng,
            table: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &TabularConfig {
        &self.config
    }

    pub fn value(&self, state: &str, target: &SubgoalId) -> f64 {
        self.table
            .get(&(state.to_string(), target.clone()))
            .copied()
            .unwrap_or(0.0)
    }

    /// Highest-valued target; ties go to the lexicographically first id.
    pub fn greedy(&self, state: &str, available: &[SubgoalId]) -> Option<SubgoalId> {
        let mut sorted: Vec<&SubgoalId> = available.iter().collect();
        sorted.sort();
        let mut best: Option<(&SubgoalId, f64)> = None;
        for t in sorted {
            let v = self.value(state, t);
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((t, v));
            }
        }
        best.map(|(t, _)| t.clone())
    }

    /// Uniform over `available` with probability epsilon, greedy otherwise.
    pub fn select(&mut self, state: &str, available: &[SubgoalId]) -> Option<SubgoalId> {
        if available.is_empty() {
            return None;
        }
        if self.rng.gen::<f64>() < self.config.epsilon {
            let mut sorted: Vec<&SubgoalId> = available.iter().collect();
            sorted.sort();
            return Some(sorted[self.rng.gen_range(0..sorted.len())].clone());
        }
        self.greedy(state, available)
    }

    /// One-step temporal-difference update.
    pub fn update(
        &mut self,
        state: &str,
        target: &SubgoalId,
        reward: f64,
        next_state: &str,
        next_available: &[SubgoalId],
        done: bool,
    ) {
        let bootstrap = if done {
            0.0
        } else {
            next_available
                .iter()
                .map(|t| self.value(next_state, t))
                .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
                .unwrap_or(0.0)
        };
        let old = self.value(state, target);
        let new =
            old + self.config.learning_rate * (reward + self.config.discount * bootstrap - old);
        self.table.insert((state.to_string(), target.clone()), new);
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

#[derive(Debug, Clone)]
struct RunningMacro {
    state: String,
    target: SubgoalId,
    reward: f64,
    steps: u32,
    finished: bool,
}

/// Picks macro targets among subgoals whose preconditions currently hold and
/// runs each one through the scripted navigator. Learns from shaped reward.
#[derive(Debug, Clone)]
pub struct TabularPolicy {
    graph: SubgoalGraph,
    learner: TabularLearner,
    current: Option<RunningMacro>,
}

impl TabularPolicy {
    pub fn new(graph: &SubgoalGraph, config: TabularConfig, seed: u64) -> Self {
        Self {
            graph: graph.clone(),
            learner: TabularLearner::new(config, seed),
            current: None,
        }
    }

    pub fn learner(&self) -> &TabularLearner {
        &self.learner
    }

    /// Target of the macro in progress.
    pub fn current_target(&self) -> Option<&SubgoalId> {
        self.current.as_ref().map(|m| &m.target)
    }
}

impl Policy for TabularPolicy {
    fn act(&mut self, input: &PolicyInput<'_>) -> Action {
        let world = input.world;
        if self.current.is_none() {
            let state = features(world);
            let available = ready_subgoals(&self.graph, world);
            let Some(target) = self.learner.select(&state, &available) else {
                return Action::Noop;
            };
            self.current = Some(RunningMacro {
                state,
                target,
                reward: 0.0,
                steps: 0,
                finished: false,
            });
        }
        let budget = self.learner.config.macro_budget.max(1);
        let Some(m) = self.current.as_mut() else {
            return Action::Noop;
        };
        let (step, terminal) = macro_step(world, m.target.as_str());
        m.steps += 1;
        let action = match step {
            NextStep::Act(a) => a,
            NextStep::Arrived => {
                m.finished = true;
                terminal
            }
            NextStep::Unreachable => {
                m.finished = true;
                Action::Noop
            }
        };
        if m.steps >= budget {
            m.finished = true;
        }
        action
    }

    fn observe(&mut self, transition: &Transition<'_>) {
        let Some(m) = self.current.as_mut() else {
            return;
        };
        m.reward += transition.shaped_reward();
        if m.finished || transition.done {
            let next_state = features(transition.world);
            let next_available = ready_subgoals(&self.graph, transition.world);
            let m = self.current.take().expect("macro in progress");
            self.learner.update(
                &m.state,
                &m.target,
                m.reward,
                &next_state,
                &next_available,
                transition.done,
            );
        }
    }

    fn reset_episode(&mut self) {
        self.current = None;
    }
}
