//! Goal-conditioned policies: scripted executor, random floor and a tabular
//! macro learner.

mod scripted;
mod tabular;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::gridcraft::{Action, World};
use crate::knowledge::{Condition, SubgoalGraph, SubgoalId};
use crate::tracker::TextObservation;

pub use scripted::{macro_step, next_step, NextStep, ScriptedExecutor};
pub use tabular::{features, TabularConfig, TabularLearner, TabularPolicy};

/// What a policy sees before acting. The world reference gives policies
/// direct map access; the text observation is what a learned policy would
/// consume.
pub struct PolicyInput<'a> {
    pub obs: &'a TextObservation,
    pub world: &'a World,
    pub plan: Option<&'a [SubgoalId]>,
    /// Tracker first-achieved flags for the active plan.
    pub achieved: &'a BTreeMap<SubgoalId, bool>,
}

/// One environment step as reported back to the policy.
pub struct Transition<'a> {
    pub action: Action,
    pub env_reward: f64,
    pub extra_reward: f64,
    pub done: bool,
    pub world: &'a World,
    pub plan: Option<&'a [SubgoalId]>,
    pub achieved: &'a BTreeMap<SubgoalId, bool>,
}

impl Transition<'_> {
    pub fn shaped_reward(&self) -> f64 {
        self.env_reward + self.extra_reward
    }
}

pub trait Policy {
    fn act(&mut self, input: &PolicyInput<'_>) -> Action;

    /// Learning hook, called after every step.
    fn observe(&mut self, _transition: &Transition<'_>) {}

    fn reset_episode(&mut self) {}
}

/// Uniform over the 17 primitive actions.
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for RandomPolicy {
    fn act(&mut self, _input: &PolicyInput<'_>) -> Action {
        Action::ALL[self.rng.gen_range(0..Action::ALL.len())]
    }
}

/// Subgoals whose graph preconditions hold in the current world, in id order.
pub fn ready_subgoals(graph: &SubgoalGraph, world: &World) -> Vec<SubgoalId> {
    let unlocked = world.achievements();
    graph
        .nodes()
        .iter()
        .filter(|(_, n)| {
            n.preconditions.iter().all(|c| match c {
                Condition::SubgoalAchieved(p) => unlocked.get(p.as_str()).copied().unwrap_or(false),
                Condition::InventoryAtLeast { item, amount } => world.count(item) >= *amount,
            })
        })
        .map(|(id, _)| id.clone())
        .collect()
}
