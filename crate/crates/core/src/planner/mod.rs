//! Actor, critic and refiner planning pipeline.

mod parse;
mod pipeline;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::knowledge::{
    extract_entity_names, lookup_entities, render_entities, verbalize, Condition, EntityKb,
    KnowledgeError, SubgoalGraph, SubgoalId, GRAPH_GRAMMAR,
};
use crate::llm::{LlmError, Role};
use crate::template::{self, TemplateError};
use crate::tracker::TextObservation;

pub use parse::{
    parse_actor_output, parse_critic_output, parse_refiner_output, render_candidates,
    render_feedback, CandidatePlan, CriticFeedback, RefinerOutput, PLAN_LABELS,
};
pub use pipeline::{FinalPlan, PipelineTrace, Planner, Provenance, StageRecord};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("missing `{0}<...>` block")]
    MissingLabel(String),
    #[error("line {line}: unexpected content `{text}`")]
    Unexpected { line: usize, text: String },
    #[error("line {line}: `{label}<` is never closed with `>`")]
    Unterminated { label: String, line: usize },
    #[error("line {line}: trailing `{label}<...>` block")]
    Trailing { line: usize, label: String },
    #[error("{label} must list exactly 3 subgoals, found {found}")]
    Arity { label: String, found: usize },
    #[error("{label} lists `{subgoal}` more than once")]
    Duplicate { label: String, subgoal: String },
    #[error("`{0}` block is empty")]
    Empty(String),
    #[error("ranking `{0}` is not a permutation of the plan labels")]
    Ranking(String),
    #[error("Need_Modify must be yes or no, got `{0}`")]
    Flag(String),
}

#[derive(Debug, thiserror::Error)]
pub enum PlannerError {
    #[error("{stage} prompt needs `{name}`")]
    MissingExtra { stage: Stage, name: String },
    #[error("template error: {0}")]
    Template(TemplateError),
    #[error("cannot read template {path}: {source}")]
    TemplateFile {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error(transparent)]
    Backend(#[from] LlmError),
    #[error("only {0} subgoals available; plans need 3")]
    NotEnoughSubgoals(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Actor,
    Critic,
    Refiner,
}

impl Stage {
    pub fn role(self) -> Role {
        match self {
            Stage::Actor => Role::Actor,
            Stage::Critic => Role::Critic,
            Stage::Refiner => Role::Refiner,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Stage::Actor => "actor",
            Stage::Critic => "critic",
            Stage::Refiner => "refiner",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Every placeholder a template may use.
pub const PLACEHOLDERS: [&str; 11] = [
    "text_obs",
    "entity_info",
    "unachieved",
    "subgoal_set",
    "subgoal_text_set",
    "graph_text",
    "actor_output",
    "subgoal_details_text",
    "candidate_plans",
    "critic_feedback",
    "Graph description",
];

/// System and user templates per stage plus the grammar description.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    prompts: BTreeMap<(Stage, bool), String>,
    grammar: String,
}

impl Default for Templates {
    fn default() -> Self {
        Self::bundled()
    }
}

impl Templates {
    pub fn bundled() -> Self {
        let prompts = [
            (
                (Stage::Actor, true),
                include_str!("../../templates/actor_system.txt"),
            ),
            (
                (Stage::Actor, false),
                include_str!("../../templates/actor_user.txt"),
            ),
            (
                (Stage::Critic, true),
                include_str!("../../templates/critic_system.txt"),
            ),
            (
                (Stage::Critic, false),
                include_str!("../../templates/critic_user.txt"),
            ),
            (
                (Stage::Refiner, true),
                include_str!("../../templates/refiner_system.txt"),
            ),
            (
                (Stage::Refiner, false),
                include_str!("../../templates/refiner_user.txt"),
            ),
        ];
        Self {
            prompts: prompts
                .into_iter()
                .map(|(k, v)| (k, v.to_string()))
                .collect(),
            grammar: GRAPH_GRAMMAR.to_string(),
        }
    }

    /// Loads `<stage>_system.txt`, `<stage>_user.txt` and `graph_grammar.txt`
    /// from `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self, PlannerError> {
        let read = |name: String| {
            let path = dir.join(&name);
            std::fs::read_to_string(&path).map_err(|source| PlannerError::TemplateFile {
                path: path.display().to_string(),
                source,
            })
        };
        let mut prompts = BTreeMap::new();
        for stage in [Stage::Actor, Stage::Critic, Stage::Refiner] {
            prompts.insert((stage, true), read(format!("{stage}_system.txt"))?);
            prompts.insert((stage, false), read(format!("{stage}_user.txt"))?);
        }
        Ok(Self {
            prompts,
            grammar: read("graph_grammar.txt".into())?,
        })
    }

    pub fn system(&self, stage: Stage) -> &str {
        &self.prompts[&(stage, true)]
    }

    pub fn user(&self, stage: Stage) -> &str {
        &self.prompts[&(stage, false)]
    }

    /// Replaces one template, e.g. to customise a prompt in tests.
    pub fn set(&mut self, stage: Stage, system: bool, text: impl Into<String>) {
        self.prompts.insert((stage, system), text.into());
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    /// Extra attempts per stage after a malformed or invalid response.
    pub retries: u32,
    /// Neighbourhood radius for subgoal details given to the critic.
    pub detail_hops: usize,
    /// Offer only frontier subgoals instead of every graph node.
    pub frontier_only: bool,
    pub max_tokens: Option<u32>,
    pub model: Option<String>,
    pub templates_dir: Option<PathBuf>,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            retries: 2,
            detail_hops: 0,
            frontier_only: false,
            max_tokens: None,
            model: None,
            templates_dir: None,
        }
    }
}

/// Everything the prompts are rendered from at one planning step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanningContext {
    pub text_obs: TextObservation,
    pub entity_info: String,
    pub unachieved: Vec<SubgoalId>,
    pub available_subgoals: BTreeSet<SubgoalId>,
    pub graph_text: String,
    /// Fallback subgoals, best first; always drawn from `available_subgoals`.
    pub frontier: Vec<SubgoalId>,
}

fn condition_holds(c: &Condition, obs: &TextObservation, achieved: &BTreeSet<SubgoalId>) -> bool {
    match c {
        Condition::SubgoalAchieved(s) => achieved.contains(s),
        Condition::InventoryAtLeast { item, amount } => obs.inventory_count(item) >= *amount,
    }
}

fn tiered(
    graph: &SubgoalGraph,
    obs: &TextObservation,
    achieved: &BTreeSet<SubgoalId>,
) -> Result<Vec<(u8, SubgoalId)>, PlannerError> {
    let depths = graph
        .depths()
        .ok_or_else(|| KnowledgeError::Invalid(graph.validate()))?;
    let mut ranked: Vec<(u8, usize, SubgoalId)> = graph
        .nodes()
        .iter()
        .map(|(id, node)| {
            let tier = if achieved.contains(id) {
                2
            } else if node
                .preconditions
                .iter()
                .all(|c| condition_holds(c, obs, achieved))
            {
                0
            } else {
                1
            };
            (tier, depths[id], id.clone())
        })
        .collect();
    ranked.sort();
    Ok(ranked.into_iter().map(|(tier, _, id)| (tier, id)).collect())
}

/// Subgoals ranked for fallback use: unachieved ones whose preconditions
/// hold, then other unachieved ones, then achieved ones; each tier ordered by
/// (AND depth, id).
pub fn frontier_ranking(
    graph: &SubgoalGraph,
    obs: &TextObservation,
    achieved: &BTreeSet<SubgoalId>,
) -> Result<Vec<SubgoalId>, PlannerError> {
    Ok(tiered(graph, obs, achieved)?
        .into_iter()
        .map(|(_, id)| id)
        .collect())
}

/// Entity names are taken from the visible and inventory sections only, so
/// vitals labels do not pull in records on every step.
fn mentioned_entities(obs: &TextObservation, kb: &EntityKb) -> BTreeSet<String> {
    let text: Vec<&str> = obs
        .visible
        .iter()
        .map(String::as_str)
        .chain(obs.inventory.iter().map(|(k, _)| k.as_str()))
        .collect();
    extract_entity_names(&text.join(", "), kb)
}

pub fn build_context(
    obs: &TextObservation,
    graph: &SubgoalGraph,
    kb: &EntityKb,
    achieved: &BTreeSet<SubgoalId>,
    config: &PlannerConfig,
) -> Result<PlanningContext, PlannerError> {
    let names = mentioned_entities(obs, kb);
    let entity_info = render_entities(&lookup_entities(kb, names.iter().map(String::as_str)).found);
    let unachieved = graph
        .ids()
        .filter(|id| !achieved.contains(*id))
        .cloned()
        .collect();
    let graph_text = verbalize(graph, true)?;
    let tiers = tiered(graph, obs, achieved)?;
    let available: BTreeSet<SubgoalId> = if config.frontier_only {
        // ready subgoals, padded to a full plan with the next best ranked
        let ready = tiers.iter().filter(|(t, _)| *t == 0).count().max(3);
        tiers.iter().take(ready).map(|(_, id)| id.clone()).collect()
    } else {
        graph.ids().cloned().collect()
    };
    if available.len() < 3 {
        return Err(PlannerError::NotEnoughSubgoals(available.len()));
    }
    let frontier = tiers
        .into_iter()
        .map(|(_, id)| id)
        .filter(|id| available.contains(id))
        .take(3)
        .collect();
    Ok(PlanningContext {
        text_obs: obs.clone(),
        entity_info,
        unachieved,
        available_subgoals: available,
        graph_text,
        frontier,
    })
}

/// Stage-specific values beyond the shared context.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PromptExtras {
    pub actor_output: Option<String>,
    pub subgoal_details_text: Option<String>,
    pub candidate_plans: Option<String>,
    pub critic_feedback: Option<String>,
}

fn join_ids<'a>(ids: impl Iterator<Item = &'a SubgoalId>) -> String {
    let v: Vec<&str> = ids.map(SubgoalId::as_str).collect();
    if v.is_empty() {
        "none".into()
    } else {
        v.join(", ")
    }
}

/// Renders the system and user prompt for `stage`.
pub fn render_prompt(
    templates: &Templates,
    stage: Stage,
    ctx: &PlanningContext,
    extras: &PromptExtras,
) -> Result<(String, String), PlannerError> {
    let subgoals = join_ids(ctx.available_subgoals.iter());
    let mut values: BTreeMap<&str, String> = BTreeMap::new();
    values.insert("text_obs", ctx.text_obs.to_string());
    values.insert("entity_info", ctx.entity_info.clone());
    values.insert("unachieved", join_ids(ctx.unachieved.iter()));
    values.insert("subgoal_set", subgoals.clone());
    values.insert("subgoal_text_set", subgoals);
    values.insert("graph_text", ctx.graph_text.clone());
    values.insert(
        "Graph description",
        templates.grammar.trim_end().to_string(),
    );
    for (name, v) in [
        ("actor_output", &extras.actor_output),
        ("subgoal_details_text", &extras.subgoal_details_text),
        ("candidate_plans", &extras.candidate_plans),
        ("critic_feedback", &extras.critic_feedback),
    ] {
        if let Some(v) = v {
            values.insert(name, v.clone());
        }
    }
    let fill = |text: &str| {
        template::render(text, &PLACEHOLDERS, &values).map_err(|e| match e {
            TemplateError::MissingValue(name) => PlannerError::MissingExtra { stage, name },
            other => PlannerError::Template(other),
        })
    };
    Ok((fill(templates.system(stage))?, fill(templates.user(stage))?))
}
