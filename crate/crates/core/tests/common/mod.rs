#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use gridplan_core::knowledge::{
    load_graph, load_kb, Condition, Dependency, DependencyKind, EntityKb, GraphDocument,
    SubgoalEntry, SubgoalGraph, SubgoalId,
};
use gridplan_core::tracker::{AchievedCountPolicy, TextObservation, TrackerState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> PathBuf {
    gridplan_core::fixtures_dir().join(name)
}

pub fn crafter_graph() -> SubgoalGraph {
    load_graph(&fixture("crafter_graph.json")).expect("fixture graph loads")
}

pub fn crafter_kb() -> EntityKb {
    load_kb(&fixture("crafter_kb.json")).expect("fixture kb loads")
}

pub fn transcript(name: &str) -> String {
    std::fs::read_to_string(fixture("transcripts").join(name)).expect("transcript fixture")
}

pub fn id(s: &str) -> SubgoalId {
    SubgoalId::new(s).unwrap()
}

/// Random valid AND/OR DAG with up to `max_nodes` nodes. Nodes are created in
/// topological order; AND groups and OR alternatives only draw on earlier
/// nodes, and preconditions mirror AND groups so the graph validates.
pub fn random_dag(seed: u64, max_nodes: usize) -> SubgoalGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=max_nodes);
    let mut names: Vec<String> = (0..n)
        .map(|i| format!("g{i:02}_{}", rng.gen_range(0..100)))
        .collect();
    names.sort();
    names.dedup();
    let n = names.len();
    let mut order: Vec<usize> = (0..n).collect();
    // shuffle so topological order is independent of lexical order
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let mut entries = Vec::new();
    for (pos, &idx) in order.iter().enumerate() {
        let name = &names[idx];
        let earlier: Vec<&String> = order[..pos].iter().map(|&j| &names[j]).collect();
        let kind = if earlier.is_empty() {
            0
        } else {
            rng.gen_range(0..3)
        };
        let pick = |rng: &mut ChaCha8Rng| -> Vec<SubgoalId> {
            let k = rng.gen_range(1..=earlier.len().min(3));
            let mut chosen = BTreeSet::new();
            while chosen.len() < k {
                chosen.insert(earlier[rng.gen_range(0..earlier.len())].clone());
            }
            chosen
                .into_iter()
                .map(|s| SubgoalId::new(s).unwrap())
                .collect()
        };
        let (dependency, preconditions) = match kind {
            1 => {
                let sources = pick(&mut rng);
                let pre = sources
                    .iter()
                    .cloned()
                    .map(Condition::SubgoalAchieved)
                    .collect();
                (
                    Some(Dependency {
                        kind: DependencyKind::And,
                        sources,
                    }),
                    pre,
                )
            }
            2 => (
                Some(Dependency {
                    kind: DependencyKind::Or,
                    sources: pick(&mut rng),
                }),
                Vec::new(),
            ),
            _ => (None, Vec::new()),
        };
        entries.push(SubgoalEntry {
            id: SubgoalId::new(name.clone()).unwrap(),
            description: format!("node {name}"),
            preconditions,
            postconditions: vec![gridplan_core::knowledge::StateChangeSpec {
                object: name.clone(),
                change: gridplan_core::knowledge::Change::Appear,
            }],
            dependency,
            review: None,
        });
    }
    SubgoalGraph::from_document(&GraphDocument { subgoals: entries })
        .expect("generated graph builds")
}

/// Edge set as (sources, target, is_and) triples for structural comparison.
pub type Structure = (BTreeSet<String>, BTreeSet<(Vec<String>, String, bool)>);

pub fn structure(g: &SubgoalGraph) -> Structure {
    let nodes = g.ids().map(|i| i.to_string()).collect();
    let mut edges = BTreeSet::new();
    for (t, group) in g.and_groups() {
        edges.insert((
            group.iter().map(|s| s.to_string()).collect(),
            t.to_string(),
            true,
        ));
    }
    for (t, alts) in g.or_edges() {
        for s in alts {
            edges.insert((vec![s.to_string()], t.to_string(), false));
        }
    }
    (nodes, edges)
}

/// Independent acyclicity oracle: recursive three-colour DFS over all edges.
pub fn dfs_has_cycle(g: &SubgoalGraph) -> bool {
    let mut succ: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (s, t) in g.edges() {
        succ.entry(s.to_string()).or_default().push(t.to_string());
    }
    fn visit(
        n: &str,
        succ: &BTreeMap<String, Vec<String>>,
        colour: &mut BTreeMap<String, u8>,
    ) -> bool {
        match colour.get(n) {
            Some(1) => return true,
            Some(2) => return false,
            _ => {}
        }
        colour.insert(n.to_string(), 1);
        for m in succ.get(n).into_iter().flatten() {
            if visit(m, succ, colour) {
                return true;
            }
        }
        colour.insert(n.to_string(), 2);
        false
    }
    let mut colour = BTreeMap::new();
    g.ids().any(|n| visit(n.as_str(), &succ, &mut colour))
}

pub fn ids(names: &[&str]) -> Vec<SubgoalId> {
    names.iter().map(|s| id(s)).collect()
}

/// Observation with fixed vitals; zero counts are left out of the inventory.
pub fn trace_obs(visible: &[&str], inventory: &[(&str, u32)]) -> TextObservation {
    TextObservation {
        visible: visible.iter().map(|s| s.to_string()).collect(),
        inventory: inventory
            .iter()
            .filter(|(_, n)| *n > 0)
            .map(|(k, n)| (k.to_string(), *n))
            .collect(),
        vitals: ["health", "food", "drink", "energy"]
            .iter()
            .map(|k| (k.to_string(), 9))
            .collect(),
        status: Vec::new(),
    }
}

/// 31 observations, 30 transitions. Plan A covers steps 1..=15, plan B the rest.
pub fn scripted_trace() -> Vec<TextObservation> {
    let mut trace = Vec::new();
    for t in 0..=30u32 {
        let wood = match t {
            0..=2 => 0,
            3..=4 => 1,
            5..=7 => 2,
            8..=9 => 0,
            10..=11 => 1,
            _ => 0,
        };
        let pickaxe = u32::from(t >= 12);
        let sapling = u32::from((17..19).contains(&t) || (22..24).contains(&t));
        let mut visible = vec!["grass", "tree"];
        if t >= 8 {
            visible.push("table");
        }
        if (25..27).contains(&t) || t == 29 {
            visible.push("zombie");
        }
        visible.sort();
        trace.push(trace_obs(
            &visible,
            &[
                ("sapling", sapling),
                ("wood", wood),
                ("wood_pickaxe", pickaxe),
            ],
        ));
    }
    trace
}

pub fn replay_trace(policy: AchievedCountPolicy) -> (Vec<f64>, Vec<f64>, SubgoalGraph) {
    let mut graph = crafter_graph();
    let mut tracker = TrackerState::new(0.2, policy).unwrap();
    let trace = scripted_trace();
    let plan_a = ids(&["collect_wood", "place_table", "make_wood_pickaxe"]);
    let plan_b = ids(&["collect_sapling", "place_plant", "defeat_zombie"]);
    let mut rewards = Vec::new();
    let mut per_plan = Vec::new();
    let mut unlocked = BTreeSet::new();
    tracker.new_plan(&plan_a, &mut graph, &unlocked).unwrap();
    for t in 1..=30 {
        if t == 16 {
            per_plan.push(tracker.plan_extra_reward());
            tracker.new_plan(&plan_b, &mut graph, &unlocked).unwrap();
        }
        let step = tracker.step(&trace[t - 1], &trace[t], &mut graph).unwrap();
        unlocked.extend(step.first_time.iter().cloned());
        rewards.push(step.extra_reward);
    }
    per_plan.push(tracker.plan_extra_reward());
    (rewards, per_plan, graph)
}
