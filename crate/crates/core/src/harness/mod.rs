//! Run configuration, the plan/act/track control loop and run logs.

mod metrics;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use metrics::{episodes_from_steps, score, summarize, EpisodeOutcome, Report};

use crate::agent::{
    Policy, PolicyInput, RandomPolicy, ScriptedExecutor, TabularConfig, TabularPolicy, Transition,
};
use crate::gridcraft::{Action, World, WorldConfig, WorldError};
use crate::knowledge::{
    load_graph, load_kb, verbalize, EntityKb, KnowledgeError, SubgoalGraph, SubgoalId,
};
use crate::llm::{BackendConfig, Gateway, HttpConfig, LlmError};
use crate::planner::{build_context, Planner, PlannerConfig, PlannerError, Provenance};
use crate::tracker::{AchievedCountPolicy, TrackerError, TrackerState, DEFAULT_ALPHA};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid run config: {0}")]
    Config(String),
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: String, message: String },
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Tracker(#[from] TrackerError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("{0}")]
    Score(String),
    #[error("no episodes to summarize")]
    NoEpisodes,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    #[default]
    Scripted,
    Random,
    Tabular,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Http,
    #[default]
    Mock,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockSection {
    pub script: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplaySection {
    pub transcript: PathBuf,
}

/// Backend choice plus per-backend settings; only the chosen one is needed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSection {
    pub backend: BackendKind,
    pub mock: Option<MockSection>,
    pub replay: Option<ReplaySection>,
    pub http: Option<HttpConfig>,
}

impl LlmSection {
    pub fn backend_config(&self) -> Result<BackendConfig, HarnessError> {
        let missing = |name: &str| {
            HarnessError::Config(format!(
                "backend `{name}` selected but [llm.{name}] is missing"
            ))
        };
        Ok(match self.backend {
            BackendKind::Mock => BackendConfig::Mock {
                script: self
                    .mock
                    .as_ref()
                    .ok_or_else(|| missing("mock"))?
                    .script
                    .clone(),
            },
            BackendKind::Replay => BackendConfig::Replay {
                transcript: self
                    .replay
                    .as_ref()
                    .ok_or_else(|| missing("replay"))?
                    .transcript
                    .clone(),
            },
            BackendKind::Http => {
                BackendConfig::Http(self.http.clone().ok_or_else(|| missing("http"))?)
            }
        })
    }
}

fn default_max_steps() -> u64 {
    20_000
}
fn default_interval() -> u64 {
    100
}
fn default_plan_len() -> usize {
    3
}
fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}
fn default_true() -> bool {
    true
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("run_out")
}

/// Experiment configuration. Relative paths are resolved against the
/// directory of the config file by [`RunConfig::load`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_steps")]
    pub max_steps: u64,
    #[serde(default = "default_interval")]
    pub planning_interval: u64,
    #[serde(default = "default_plan_len")]
    pub subgoals_per_plan: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Whether tracker rewards reach the policy.
    #[serde(default = "default_true")]
    pub extra_reward: bool,
    #[serde(default)]
    pub achieved_count: AchievedCountPolicy,
    #[serde(default)]
    pub policy: PolicyKind,
    pub graph: PathBuf,
    pub kb: PathBuf,
    /// World settings; built-in defaults when absent.
    #[serde(default)]
    pub world: Option<PathBuf>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub llm: LlmSection,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default)]
    pub tabular: TabularConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let de = toml::Deserializer::new(text);
        serde_path_to_error::deserialize(de).map_err(|e| HarnessError::Parse {
            path: "<config>".into(),
            message: format!("{}: {}", e.path(), e.inner()),
        })
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| match e {
            HarnessError::Parse { message, .. } => HarnessError::Parse {
                path: path.display().to_string(),
                message,
            },
            other => other,
        })?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        cfg.validate()?;
        Ok(cfg)
    }

    /// Makes every relative path absolute with respect to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.graph);
        fix(&mut self.kb);
        fix(&mut self.out_dir);
        if let Some(w) = &mut self.world {
            fix(w);
        }
        if let Some(m) = &mut self.llm.mock {
            fix(&mut m.script);
        }
        if let Some(r) = &mut self.llm.replay {
            fix(&mut r.transcript);
        }
        if let Some(t) = &mut self.planner.templates_dir {
            fix(t);
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.max_steps == 0 {
            return bad("max_steps must be at least 1".into());
        }
        if self.planning_interval == 0 {
            return bad("planning_interval must be at least 1".into());
        }
        if self.subgoals_per_plan != 3 {
            return bad(format!(
                "subgoals_per_plan must be 3 (the prompt format fixes it), got {}",
                self.subgoals_per_plan
            ));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        let t = &self.tabular;
        if !(0.0..=1.0).contains(&t.epsilon)
            || !(t.learning_rate > 0.0 && t.learning_rate <= 1.0)
            || !(0.0..=1.0).contains(&t.discount)
        {
            return bad(
                "tabular epsilon and discount must lie in [0, 1], learning_rate in (0, 1]".into(),
            );
        }
        self.llm.backend_config().map(|_| ())
    }

    pub fn world_config(&self) -> Result<WorldConfig, HarnessError> {
        Ok(match &self.world {
            Some(p) => WorldConfig::load(p)?,
            None => WorldConfig::default(),
        })
    }
}

/// Why a plan was requested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplanReason {
    /// Step index is a multiple of the planning interval.
    Interval,
    EpisodeStart,
    /// Every subgoal of the previous plan was achieved.
    Completed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub episode: u64,
    pub episode_step: u64,
    pub plan_id: u64,
    pub action: Action,
    pub env_reward: f64,
    pub extra_reward: f64,
    /// Plan subgoals detected this step.
    pub achieved: Vec<SubgoalId>,
    pub first_time: Vec<SubgoalId>,
    /// Environment achievements unlocked for the first time this episode.
    pub new_achievements: Vec<String>,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub plan_id: u64,
    pub step: u64,
    pub episode: u64,
    pub reason: ReplanReason,
    pub subgoals: Vec<SubgoalId>,
    pub provenance: Provenance,
    pub llm_calls: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub episode: u64,
    pub seed: u64,
    pub start_step: u64,
    pub steps: u64,
    pub env_reward: f64,
    pub extra_reward: f64,
    pub unlocked: Vec<String>,
    /// Episode step (1-based) at which each achievement first fired.
    pub first_unlock: BTreeMap<String, u64>,
    /// Cut off by the run's step budget rather than ended by the world.
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    #[serde(flatten)]
    pub report: Report,
    pub steps: u64,
    pub planning_calls: u64,
    pub replans: BTreeMap<ReplanReason, u64>,
    pub llm_calls: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunLog {
    pub steps: Vec<StepRecord>,
    pub plans: Vec<PlanRecord>,
    pub episodes: Vec<EpisodeSummary>,
    pub metrics: Option<Metrics>,
    /// Weighted graph text at the end of the run.
    pub graph_text: String,
}

pub const STEPS_FILE: &str = "steps.jsonl";
pub const PLANS_FILE: &str = "plans.jsonl";
pub const EPISODES_FILE: &str = "episodes.jsonl";
pub const METRICS_FILE: &str = "metrics.json";
pub const TRANSCRIPT_FILE: &str = "transcript.jsonl";
pub const GRAPH_FILE: &str = "graph_weights.txt";

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = std::io::BufWriter::new(file);
    for r in rows {
        let line = serde_json::to_string(r).expect("log records serialize");
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, HarnessError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| HarnessError::Parse {
                path: path.display().to_string(),
                message: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}

impl RunLog {
    /// Writes every log file except the transcript, which the gateway
    /// streams on its own.
    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        write_jsonl(&dir.join(STEPS_FILE), &self.steps)?;
        write_jsonl(&dir.join(PLANS_FILE), &self.plans)?;
        write_jsonl(&dir.join(EPISODES_FILE), &self.episodes)?;
        if let Some(m) = &self.metrics {
            let path = dir.join(METRICS_FILE);
            let text = serde_json::to_string_pretty(m).expect("metrics serialize") + "\n";
            fs::write(&path, text).map_err(io_err(&path))?;
        }
        let path = dir.join(GRAPH_FILE);
        fs::write(&path, &self.graph_text).map_err(io_err(&path))
    }

    pub fn load(dir: &Path) -> Result<Self, HarnessError> {
        let metrics_path = dir.join(METRICS_FILE);
        let metrics = if metrics_path.exists() {
            let text = fs::read_to_string(&metrics_path).map_err(io_err(&metrics_path))?;
            Some(
                serde_json::from_str(&text).map_err(|e| HarnessError::Parse {
                    path: metrics_path.display().to_string(),
                    message: e.to_string(),
                })?,
            )
        } else {
            None
        };
        let graph_path = dir.join(GRAPH_FILE);
        Ok(Self {
            steps: read_jsonl(&dir.join(STEPS_FILE))?,
            plans: read_jsonl(&dir.join(PLANS_FILE))?,
            episodes: read_jsonl(&dir.join(EPISODES_FILE))?,
            metrics,
            graph_text: fs::read_to_string(&graph_path).unwrap_or_default(),
        })
    }
}

/// Loaded, validated run inputs.
#[derive(Debug, Clone)]
pub struct RunInputs {
    pub graph: SubgoalGraph,
    pub kb: EntityKb,
    pub world: WorldConfig,
    pub planner: Planner,
}

impl RunInputs {
    pub fn load(cfg: &RunConfig) -> Result<Self, HarnessError> {
        let graph = load_graph(&cfg.graph)?;
        let kb = load_kb(&cfg.kb)?;
        let world = cfg.world_config()?;
        world.validate()?;
        let planner = Planner::new(cfg.planner.clone())?;
        Ok(Self {
            graph,
            kb,
            world,
            planner,
        })
    }
}

/// Builds the policy named in the config.
pub fn make_policy(cfg: &RunConfig, graph: &SubgoalGraph) -> Box<dyn Policy> {
    match cfg.policy {
        PolicyKind::Scripted => Box::new(ScriptedExecutor::new(graph)),
        PolicyKind::Random => Box::new(RandomPolicy::new(cfg.seed)),
        PolicyKind::Tabular => Box::new(TabularPolicy::new(graph, cfg.tabular.clone(), cfg.seed)),
    }
}

/// Loads inputs, runs the loop with the configured backend and policy, and
/// writes all logs to the output directory. Logs are flushed even when the
/// run aborts.
pub fn run(cfg: &RunConfig) -> Result<RunLog, HarnessError> {
    cfg.validate()?;
    let inputs = RunInputs::load(cfg)?;
    fs::create_dir_all(&cfg.out_dir).map_err(io_err(&cfg.out_dir))?;
    let mut gateway = Gateway::from_config(&cfg.llm.backend_config()?)?
        .with_transcript_file(&cfg.out_dir.join(TRANSCRIPT_FILE))?;
    let mut policy = make_policy(cfg, &inputs.graph);
    let (log, err) = simulate(cfg, inputs, &mut gateway, policy.as_mut());
    log.write(&cfg.out_dir)?;
    match err {
        Some(e) => Err(e),
        None => Ok(log),
    }
}

struct EpisodeAcc {
    summary: EpisodeSummary,
}

impl EpisodeAcc {
    fn new(episode: u64, seed: u64, start_step: u64) -> Self {
        Self {
            summary: EpisodeSummary {
                episode,
                seed,
                start_step,
                steps: 0,
                env_reward: 0.0,
                extra_reward: 0.0,
                unlocked: Vec::new(),
                first_unlock: BTreeMap::new(),
                truncated: false,
            },
        }
    }
}

fn episode_achieved(world: &World, graph: &SubgoalGraph) -> BTreeSet<SubgoalId> {
    world
        .unlocked()
        .into_iter()
        .filter(|a| graph.contains(a))
        .filter_map(|a| SubgoalId::new(a).ok())
        .collect()
}

/// Runs the control loop in memory: replan on the interval, at episode start
/// and when the active plan is complete; then act, step the world and track
/// subgoals. On failure the partial log is returned with the error.
pub fn simulate(
    cfg: &RunConfig,
    inputs: RunInputs,
    gateway: &mut Gateway,
    policy: &mut dyn Policy,
) -> (RunLog, Option<HarnessError>) {
    let mut log = RunLog::default();
    let RunInputs {
        mut graph,
        kb,
        world: world_cfg,
        planner,
    } = inputs;
    let err = simulate_inner(
        cfg, &mut graph, &kb, &world_cfg, &planner, gateway, policy, &mut log,
    )
    .err();
    let report = Report::from_outcomes(&episodes_from_steps(&log.steps));
    if let Ok(report) = report {
        let mut replans = BTreeMap::new();
        for p in &log.plans {
            *replans.entry(p.reason).or_insert(0) += 1;
        }
        log.metrics = Some(Metrics {
            report,
            steps: log.steps.len() as u64,
            planning_calls: log.plans.len() as u64,
            replans,
            llm_calls: gateway.calls() as u64,
        });
    }
    log.graph_text = verbalize(&graph, true).unwrap_or_default();
    (log, err)
}

#[allow(clippy::too_many_arguments)]
fn simulate_inner(
    cfg: &RunConfig,
    graph: &mut SubgoalGraph,
    kb: &EntityKb,
    world_cfg: &WorldConfig,
    planner: &Planner,
    gateway: &mut Gateway,
    policy: &mut dyn Policy,
    log: &mut RunLog,
) -> Result<(), HarnessError> {
    let mut tracker = TrackerState::new(cfg.alpha, cfg.achieved_count)?;
    let mut episode = 0u64;
    let episode_seed = |e: u64| cfg.seed.wrapping_add(e);
    let mut wc = world_cfg.clone();
    wc.seed = episode_seed(0);
    let (mut world, mut obs) = World::reset(&wc)?;
    let mut acc = EpisodeAcc::new(0, wc.seed, 0);
    let mut episode_start = true;
    let mut plan_id = 0u64;

    for t in 0..cfg.max_steps {
        let reason = if t % cfg.planning_interval == 0 {
            Some(ReplanReason::Interval)
        } else if episode_start {
            Some(ReplanReason::EpisodeStart)
        } else if tracker.all_achieved() {
            Some(ReplanReason::Completed)
        } else {
            None
        };
        if let Some(reason) = reason {
            let achieved = episode_achieved(&world, graph);
            let ctx = build_context(&obs, graph, kb, &achieved, &cfg.planner)?;
            let before = gateway.calls();
            let (plan, _trace) = planner.generate_plan(&ctx, graph, gateway)?;
            tracker.new_plan(&plan.subgoals, graph, &achieved)?;
            plan_id = log.plans.len() as u64;
            tracing::debug!(step = t, ?reason, plan = ?plan.subgoals, "new plan");
            log.plans.push(PlanRecord {
                plan_id,
                step: t,
                episode,
                reason,
                subgoals: plan.subgoals,
                provenance: plan.provenance,
                llm_calls: gateway.calls() - before,
            });
        }
        episode_start = false;

        let action = policy.act(&PolicyInput {
            obs: &obs,
            world: &world,
            plan: tracker.active_plan(),
            achieved: tracker.first_achieved(),
        });
        let result = world.step(action)?;
        let tracked = tracker.step(&obs, &result.obs, graph)?;
        let extra = if cfg.extra_reward {
            tracked.extra_reward
        } else {
            0.0
        };
        policy.observe(&Transition {
            action,
            env_reward: result.reward,
            extra_reward: extra,
            done: result.done,
            world: &world,
            plan: tracker.active_plan(),
            achieved: tracker.first_achieved(),
        });

        let s = &mut acc.summary;
        s.steps += 1;
        s.env_reward += result.reward;
        s.extra_reward += extra;
        for a in &result.info.new_achievements {
            s.unlocked.push(a.clone());
            s.first_unlock.insert(a.clone(), s.steps);
        }
        log.steps.push(StepRecord {
            step: t,
            episode,
            episode_step: s.steps - 1,
            plan_id,
            action,
            env_reward: result.reward,
            extra_reward: extra,
            achieved: tracked.achieved.into_iter().collect(),
            first_time: tracked.first_time.into_iter().collect(),
            new_achievements: result.info.new_achievements.clone(),
            done: result.done,
        });
        obs = result.obs;

        if result.done {
            let mut finished = std::mem::replace(
                &mut acc,
                EpisodeAcc::new(episode + 1, episode_seed(episode + 1), t + 1),
            );
            finished.summary.unlocked.sort();
            tracing::info!(
                episode,
                steps = finished.summary.steps,
                unlocked = finished.summary.unlocked.len(),
                "episode finished"
            );
            log.episodes.push(finished.summary);
            tracker.clear_plan();
            policy.reset_episode();
            episode += 1;
            wc.seed = episode_seed(episode);
            (world, obs) = World::reset(&wc)?;
            episode_start = true;
        }
    }
    if acc.summary.steps > 0 {
        acc.summary.truncated = true;
        acc.summary.unlocked.sort();
        log.episodes.push(acc.summary);
    }
    Ok(())
}
