//! Graph-aware scripted executor with shortest-path navigation.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use super::{Policy, PolicyInput};
use crate::gridcraft::{Action, CreatureKind, Dir, Pos, Tile, World};
use crate::knowledge::{Change, Condition, SubgoalGraph, SubgoalId};

/// Result of one navigation query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NextStep {
    Arrived,
    Act(Action),
    Unreachable,
}

fn can_dig(world: &World, tile: Tile) -> bool {
    match tile.mining() {
        Some((Some(tool), _)) => world.count(tool) > 0 && tile != Tile::Tree,
        _ => false,
    }
}

/// Cheapest first action towards a state where the agent stands on a cell
/// satisfying `stand` and faces a cell satisfying `face`. Searches over
/// (position, facing) with the move/turn rules of the world; minable tiles on
/// the way are dug through when `dig` is set. Ties resolve in direction order.
pub fn next_step(
    world: &World,
    stand: &dyn Fn(Pos) -> bool,
    face: Option<&dyn Fn(Pos) -> bool>,
    dig: bool,
) -> NextStep {
    let goal = |p: Pos, f: Dir| {
        stand(p) && face.is_none_or(|pred| world.neighbour(p, f).is_some_and(pred))
    };
    let (w, h) = (world.width(), world.height());
    let index = |p: Pos, f: Dir| (p.y * w + p.x) * 4 + dir_index(f);
    let mut best = vec![u32::MAX; w * h * 4];
    let mut first: Vec<Option<Action>> = vec![None; w * h * 4];
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    let start = (world.agent(), world.facing());
    best[index(start.0, start.1)] = 0;
    heap.push(Reverse((0u32, seq, start.0, dir_index(start.1))));
    while let Some(Reverse((cost, _, p, fi))) = heap.pop() {
        let f = Dir::ALL[fi];
        let i = index(p, f);
        if best[i] < cost {
            continue;
        }
        if goal(p, f) {
            return first[i].map_or(NextStep::Arrived, NextStep::Act);
        }
        for d in Dir::ALL {
            let (np, step_cost, action) = match world.neighbour(p, d) {
                Some(n)
                    if world.tile(n).walkable()
                        && (n == world.agent() || world.creature_at(n).is_none()) =>
                {
                    (n, 1, Action::toward(d))
                }
                Some(n)
                    if dig && can_dig(world, world.tile(n)) && world.creature_at(n).is_none() =>
                {
                    if f == d {
                        (n, 2, Action::Do)
                    } else {
                        (n, 3, Action::toward(d))
                    }
                }
                _ => (p, 1, Action::toward(d)),
            };
            let j = index(np, d);
            if j == i {
                continue;
            }
            let c = cost + step_cost;
            if c < best[j] {
                best[j] = c;
                first[j] = Some(first[i].unwrap_or(action));
                seq += 1;
                heap.push(Reverse((c, seq, np, dir_index(d))));
            }
        }
    }
    NextStep::Unreachable
}

fn dir_index(d: Dir) -> usize {
    Dir::ALL.iter().position(|&x| x == d).unwrap_or(0)
}

/// Next primitive action of the macro for `leaf`: navigate to the nearest
/// relevant cell, then interact, craft or place. The second value is the
/// action to emit once arrived.
pub fn macro_step(world: &World, leaf: &str) -> (NextStep, Action) {
    let any = |_: Pos| true;
    let tile_is = |t: Tile| move |p: Pos| world.tile(p) == t;
    let creature =
        |k: CreatureKind| move |p: Pos| world.creature_at(p).is_some_and(|c| c.kind == k);
    let ripe = world.config().plant_ripen_steps;
    let nav = |face: &dyn Fn(Pos) -> bool| next_step(world, &any, Some(face), true);
    match leaf {
        "collect_wood" => (nav(&tile_is(Tile::Tree)), Action::Do),
        "collect_stone" => (nav(&tile_is(Tile::Rock)), Action::Do),
        "collect_coal" => (nav(&tile_is(Tile::CoalOre)), Action::Do),
        "collect_iron" => (nav(&tile_is(Tile::IronOre)), Action::Do),
        "collect_diamond" => (nav(&tile_is(Tile::DiamondOre)), Action::Do),
        "collect_water" => (nav(&tile_is(Tile::Water)), Action::Do),
        "collect_sapling" => (
            nav(&|p| world.tile(p) == Tile::Grass && world.creature_at(p).is_none()),
            Action::Do,
        ),
        "eat_cow" => (nav(&creature(CreatureKind::Cow)), Action::Do),
        "defeat_zombie" => (nav(&creature(CreatureKind::Zombie)), Action::Do),
        "defeat_skeleton" => (nav(&creature(CreatureKind::Skeleton)), Action::Do),
        "eat_plant" => {
            let step = nav(&|p| matches!(world.tile(p), Tile::Plant { age } if age >= ripe));
            if step == NextStep::Unreachable {
                (NextStep::Act(Action::Noop), Action::Noop)
            } else {
                (step, Action::Do)
            }
        }
        "sleep" => (NextStep::Arrived, Action::Sleep),
        name => {
            let (Some(action), Some(recipe)) =
                (Action::from_name(name), world.config().recipes.get(name))
            else {
                return (NextStep::Unreachable, Action::Noop);
            };
            let radius = world.config().station_radius;
            let stations: Vec<Vec<Pos>> = recipe
                .nearby
                .iter()
                .map(|s| tiles_named(world, s))
                .collect();
            let stand = |p: Pos| {
                stations
                    .iter()
                    .all(|ps| ps.iter().any(|s| s.chebyshev(p) <= radius))
            };
            let step = if recipe.tile.is_some() {
                let on = &recipe.on;
                let face = |p: Pos| {
                    on.iter().any(|t| t == world.tile(p).name()) && world.creature_at(p).is_none()
                };
                next_step(world, &stand, Some(&face), true)
            } else {
                next_step(world, &stand, None, true)
            };
            (step, action)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Need {
    Drink,
    Food,
    Rest,
}

/// Executes plans by backward chaining through graph preconditions to the
/// deepest unmet prerequisite and running its macro.
#[derive(Debug, Clone)]
pub struct ScriptedExecutor {
    graph: SubgoalGraph,
    depths: BTreeMap<SubgoalId, usize>,
    plan: Vec<SubgoalId>,
    done_in_plan: BTreeSet<SubgoalId>,
    pending_place: Option<(SubgoalId, Pos, &'static str)>,
    need: Option<Need>,
    survival: bool,
}

impl ScriptedExecutor {
    pub fn new(graph: &SubgoalGraph) -> Self {
        let depths = graph.depths().unwrap_or_default();
        Self {
            graph: graph.clone(),
            depths,
            plan: Vec::new(),
            done_in_plan: BTreeSet::new(),
            pending_place: None,
            need: None,
            survival: true,
        }
    }

    /// Disables eating, drinking and resting on low vitals.
    pub fn without_survival(mut self) -> Self {
        self.survival = false;
        self
    }

    fn rank(&self, id: &SubgoalId) -> (usize, SubgoalId) {
        (
            self.depths.get(id).copied().unwrap_or(usize::MAX),
            id.clone(),
        )
    }

    /// Subgoal whose postconditions add `item`, preferring shallow ones.
    fn producer(&self, item: &str) -> Option<SubgoalId> {
        self.graph
            .nodes()
            .iter()
            .filter(|(_, n)| {
                n.postconditions
                    .iter()
                    .any(|p| p.object == item && matches!(p.change, Change::Delta(k) if k > 0))
            })
            .map(|(id, _)| self.rank(id))
            .min()
            .map(|(_, id)| id)
    }

    fn holds_product(&self, world: &World, id: &SubgoalId) -> bool {
        self.graph.node(id.as_str()).is_some_and(|n| {
            n.postconditions
                .iter()
                .filter(|p| matches!(p.change, Change::Delta(k) if k > 0))
                .any(|p| world.count(&p.object) > 0)
        })
    }

    /// Deepest unmet prerequisite of `target`, or `target` itself.
    fn resolve(&self, world: &World, target: &SubgoalId, budget: usize) -> SubgoalId {
        if budget == 0 {
            return target.clone();
        }
        let Some(node) = self.graph.node(target.as_str()) else {
            return target.clone();
        };
        let unlocked = world.achievements();
        for c in &node.preconditions {
            match c {
                Condition::SubgoalAchieved(p)
                    if !unlocked.get(p.as_str()).copied().unwrap_or(false) =>
                {
                    return self.resolve(world, p, budget - 1);
                }
                Condition::InventoryAtLeast { item, amount } if world.count(item) < *amount => {
                    if let Some(p) = self.producer(item).filter(|p| p != target) {
                        return self.resolve(world, &p, budget - 1);
                    }
                }
                _ => {}
            }
        }
        if let Some(recipe) = world.config().recipes.get(target.as_str()) {
            for (item, n) in &recipe.uses {
                if world.count(item) < *n {
                    if let Some(p) = self.producer(item).filter(|p| p != target) {
                        return self.resolve(world, &p, budget - 1);
                    }
                }
            }
        }
        if let Some(alts) = self.graph.or_alternatives(target.as_str()) {
            if !alts.iter().any(|a| self.holds_product(world, a)) {
                if let Some((_, best)) = alts.iter().map(|a| self.rank(a)).min() {
                    return self.resolve(world, &best, budget - 1);
                }
            }
        }
        if target.as_str() == "eat_plant" && !has_tile(world, |t| matches!(t, Tile::Plant { .. })) {
            if let Some(p) = self
                .graph
                .and_group("eat_plant")
                .and_then(|g| g.iter().next())
            {
                return self.resolve(world, p, budget - 1);
            }
        }
        target.clone()
    }

    fn survival_leaf(&mut self, world: &World) -> Option<&'static str> {
        if !self.survival {
            return None;
        }
        let v = world.vitals();
        self.need = match self.need {
            Some(Need::Drink) if v.drink >= 7 => None,
            Some(Need::Food) if v.food >= 6 => None,
            Some(Need::Rest) if !world.is_sleeping() && v.energy >= 8 => None,
            other => other,
        };
        if self.need.is_none() {
            self.need = if v.drink <= 3 {
                Some(Need::Drink)
            } else if v.food <= 3 {
                Some(Need::Food)
            } else if v.energy <= 2 {
                Some(Need::Rest)
            } else {
                None
            };
        }
        match self.need {
            Some(Need::Drink) => Some("collect_water"),
            Some(Need::Food)
                if world
                    .creatures()
                    .iter()
                    .any(|c| c.kind == CreatureKind::Cow) =>
            {
                Some("eat_cow")
            }
            Some(Need::Rest) if v.energy <= 1 || !zombie_within(world, SAFE_SLEEP_DISTANCE) => {
                Some("sleep")
            }
            _ => None,
        }
    }

    /// Unarmed although a table has been placed this episode.
    fn wants_sword(&self, world: &World) -> bool {
        self.survival
            && !armed(world)
            && self.graph.contains("make_wood_sword")
            && world
                .achievements()
                .get("place_table")
                .copied()
                .unwrap_or(false)
    }

    fn try_toward(&self, world: &World, target: &SubgoalId) -> Option<Action> {
        let leaf = self.resolve(world, target, self.graph.len() + 1);
        let (step, terminal) = macro_step(world, leaf.as_str());
        step.into_action(terminal)
    }

    fn adjacent_threat(&self, world: &World) -> bool {
        armed(world)
            && world
                .creatures()
                .iter()
                .any(|c| c.kind == CreatureKind::Zombie && c.pos.manhattan(world.agent()) == 1)
    }

    /// Next action towards achieving `target`.
    pub fn act_toward(&mut self, world: &World, target: &SubgoalId) -> Action {
        let leaf = self.resolve(world, target, self.graph.len() + 1);
        let (step, terminal) = macro_step(world, leaf.as_str());
        match step {
            NextStep::Act(a) => a,
            NextStep::Arrived => {
                if leaf == *target && leaf.as_str().starts_with("place_") {
                    if let (Some(p), Some(tile)) = (
                        world.facing_pos(),
                        world
                            .config()
                            .recipes
                            .get(leaf.as_str())
                            .and_then(|r| r.tile.as_deref()),
                    ) {
                        let tile = Tile::from_name(tile).map_or("", Tile::name);
                        self.pending_place = Some((leaf.clone(), p, tile));
                    }
                }
                terminal
            }
            NextStep::Unreachable => {
                tracing::debug!(target = %target, leaf = %leaf, "no route for subgoal");
                Action::Noop
            }
        }
    }

    fn sync_plan(&mut self, plan: &[SubgoalId]) {
        if self.plan != plan {
            self.plan = plan.to_vec();
            self.done_in_plan.clear();
            self.pending_place = None;
        }
    }

    /// True when every object `id` is meant to increase is already at its
    /// cap, so the subgoal cannot be observed right now.
    fn saturated(&self, world: &World, id: &SubgoalId) -> bool {
        let Some(node) = self.graph.node(id.as_str()) else {
            return false;
        };
        let gains: Vec<&str> = node
            .postconditions
            .iter()
            .filter(|p| matches!(p.change, Change::Delta(k) if k > 0))
            .map(|p| p.object.as_str())
            .collect();
        !gains.is_empty()
            && gains
                .iter()
                .all(|o| object_level(world, o).is_some_and(|v| v >= CAP))
    }

    /// The plan subgoal currently pursued, if any.
    pub fn current_target(
        &self,
        world: &World,
        achieved: &BTreeMap<SubgoalId, bool>,
    ) -> Option<SubgoalId> {
        self.plan
            .iter()
            .filter(|s| {
                !achieved.get(*s).copied().unwrap_or(false) && !self.done_in_plan.contains(*s)
            })
            .find(|s| !self.saturated(world, s))
            .cloned()
    }
}

/// Inventory and vitals share a ceiling.
const CAP: u32 = 9;

fn object_level(world: &World, name: &str) -> Option<u32> {
    let v = world.vitals();
    match name {
        "health" => Some(v.health),
        "food" => Some(v.food),
        "drink" => Some(v.drink),
        "energy" => Some(v.energy),
        item => Some(world.count(item)),
    }
}

/// Sleeping is skipped while a zombie is this close.
const SAFE_SLEEP_DISTANCE: usize = 6;

fn armed(world: &World) -> bool {
    ["wood_sword", "stone_sword", "iron_sword"]
        .iter()
        .any(|s| world.count(s) > 0)
}

fn zombie_within(world: &World, radius: usize) -> bool {
    world
        .creatures()
        .iter()
        .any(|c| c.kind == CreatureKind::Zombie && c.pos.manhattan(world.agent()) <= radius)
}

fn tiles_named(world: &World, name: &str) -> Vec<Pos> {
    (0..world.height())
        .flat_map(|y| (0..world.width()).map(move |x| Pos::new(x, y)))
        .filter(|&p| world.tile(p).name() == name)
        .collect()
}

fn has_tile(world: &World, pred: impl Fn(Tile) -> bool) -> bool {
    (0..world.height()).any(|y| (0..world.width()).any(|x| pred(world.tile(Pos::new(x, y)))))
}

impl Policy for ScriptedExecutor {
    fn act(&mut self, input: &PolicyInput<'_>) -> Action {
        let world = input.world;
        self.sync_plan(input.plan.unwrap_or(&[]));
        if let Some((id, pos, tile)) = self.pending_place.take() {
            if world.tile(pos).name() == tile {
                self.done_in_plan.insert(id);
            }
        }
        if world.is_sleeping() {
            return Action::Noop;
        }
        if self.adjacent_threat(world) {
            if let Some(a) = macro_step(world, "defeat_zombie").0.into_action(Action::Do) {
                return a;
            }
        }
        if self.wants_sword(world) {
            if let Some(a) =
                self.try_toward(world, &SubgoalId::new("make_wood_sword").expect("valid id"))
            {
                return a;
            }
        }
        if let Some(leaf) = self.survival_leaf(world) {
            let (step, terminal) = macro_step(world, leaf);
            if let Some(a) = step.into_action(terminal) {
                return a;
            }
        }
        match self.current_target(world, input.achieved) {
            Some(target) => self.act_toward(world, &target),
            None => Action::Noop,
        }
    }

    fn reset_episode(&mut self) {
        self.plan.clear();
        self.done_in_plan.clear();
        self.pending_place = None;
        self.need = None;
    }
}

impl NextStep {
    fn into_action(self, terminal: Action) -> Option<Action> {
        match self {
            NextStep::Act(a) => Some(a),
            NextStep::Arrived => Some(terminal),
            NextStep::Unreachable => None,
        }
    }
}
