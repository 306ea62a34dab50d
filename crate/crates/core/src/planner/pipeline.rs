//! Actor → critic → (refiner) with bounded retries and a fallback ladder.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::parse::{
    parse_actor_output, parse_critic_output, parse_refiner_output, render_candidates,
    render_feedback, CandidatePlan, CriticFeedback, RefinerOutput,
};
use super::{
    render_prompt, PlannerConfig, PlannerError, PlanningContext, PromptExtras, Stage, Templates,
};
use crate::knowledge::{render_details, subgoal_details, SubgoalGraph, SubgoalId};
use crate::llm::{ChatRequest, Gateway};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    AdoptedTopRanked,
    Refined,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FinalPlan {
    pub subgoals: Vec<SubgoalId>,
    pub provenance: Provenance,
    pub analysis: String,
}

/// One LLM call made by the pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub attempt: u32,
    pub response: String,
    /// Parse or validation error; `None` when the response was accepted.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PipelineTrace {
    pub calls: Vec<StageRecord>,
    pub candidates: Vec<CandidatePlan>,
    pub feedback: Option<CriticFeedback>,
    pub refiner: Option<RefinerOutput>,
    pub decision: String,
}

impl PipelineTrace {
    pub fn llm_calls(&self) -> usize {
        self.calls.len()
    }

    pub fn stage_calls(&self, stage: Stage) -> usize {
        self.calls.iter().filter(|c| c.stage == stage).count()
    }

    /// Whether `stage` produced an accepted response.
    pub fn stage_succeeded(&self, stage: Stage) -> bool {
        self.calls
            .iter()
            .any(|c| c.stage == stage && c.error.is_none())
    }
}

/// Checks a raw subgoal list against the available set.
pub(crate) fn validate_subgoals(
    raw: &[String],
    available: &BTreeSet<SubgoalId>,
) -> Result<Vec<SubgoalId>, String> {
    if raw.len() != 3 {
        return Err(format!("expected 3 subgoals, found {}", raw.len()));
    }
    let mut out = Vec::with_capacity(3);
    for name in raw {
        let id = available
            .iter()
            .find(|a| a.as_str() == name)
            .ok_or_else(|| format!("`{name}` is not an available subgoal"))?;
        if out.contains(id) {
            return Err(format!("`{name}` repeated"));
        }
        out.push(id.clone());
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct Planner {
    config: PlannerConfig,
    templates: Templates,
}

impl Planner {
    pub fn new(config: PlannerConfig) -> Result<Self, PlannerError> {
        let templates = match &config.templates_dir {
            Some(dir) => Templates::from_dir(dir)?,
            None => Templates::bundled(),
        };
        Ok(Self { config, templates })
    }

    pub fn with_templates(config: PlannerConfig, templates: Templates) -> Self {
        Self { config, templates }
    }

    pub fn config(&self) -> &PlannerConfig {
        &self.config
    }

    pub fn templates(&self) -> &Templates {
        &self.templates
    }

    pub fn render(
        &self,
        stage: Stage,
        ctx: &PlanningContext,
        extras: &PromptExtras,
    ) -> Result<(String, String), PlannerError> {
        render_prompt(&self.templates, stage, ctx, extras)
    }

    /// Asks `stage` up to `1 + retries` times until `accept` takes the
    /// response. Backend failures abort immediately.
    fn ask<T>(
        &self,
        stage: Stage,
        prompts: (String, String),
        gateway: &mut Gateway,
        trace: &mut PipelineTrace,
        accept: impl Fn(&str) -> Result<T, String>,
    ) -> Result<Option<T>, PlannerError> {
        let mut req = ChatRequest::new(stage.role(), prompts.0, prompts.1)?;
        if let Some(n) = self.config.max_tokens {
            req = req.with_max_tokens(n)?;
        }
        if let Some(m) = &self.config.model {
            req = req.with_model(m.clone());
        }
        for attempt in 0..=self.config.retries {
            let response = gateway.complete(&req)?;
            match accept(&response) {
                Ok(v) => {
                    trace.calls.push(StageRecord {
                        stage,
                        attempt,
                        response,
                        error: None,
                    });
                    return Ok(Some(v));
                }
                Err(e) => {
                    tracing::debug!(%stage, attempt, error = %e, "rejected response");
                    trace.calls.push(StageRecord {
                        stage,
                        attempt,
                        response,
                        error: Some(e),
                    });
                }
            }
        }
        Ok(None)
    }

    /// Runs the pipeline and always returns a valid plan unless the backend
    /// itself fails.
    pub fn generate_plan(
        &self,
        ctx: &PlanningContext,
        graph: &SubgoalGraph,
        gateway: &mut Gateway,
    ) -> Result<(FinalPlan, PipelineTrace), PlannerError> {
        let mut trace = PipelineTrace::default();
        let available = &ctx.available_subgoals;

        let actor_prompts = self.render(Stage::Actor, ctx, &PromptExtras::default())?;
        let actor = self.ask(Stage::Actor, actor_prompts, gateway, &mut trace, |text| {
            parse_actor_output(text)
                .map(|c| (c, text.to_string()))
                .map_err(|e| e.to_string())
        })?;
        let Some((candidates, actor_text)) = actor else {
            return self.fallback(ctx, &[], trace, "actor retries exhausted");
        };
        trace.candidates = candidates.clone();

        let mentioned: BTreeSet<&str> = candidates
            .iter()
            .flat_map(|c| c.subgoals.iter())
            .map(String::as_str)
            .filter(|s| graph.contains(s))
            .collect();
        let details = subgoal_details(graph, mentioned, self.config.detail_hops)?;
        let details_text = if details.is_empty() {
            "none".to_string()
        } else {
            render_details(&details)
        };
        let extras = PromptExtras {
            actor_output: Some(actor_text.trim_end().to_string()),
            subgoal_details_text: Some(details_text),
            ..PromptExtras::default()
        };
        let labels: Vec<String> = candidates.iter().map(|c| c.label.clone()).collect();
        let critic_prompts = self.render(Stage::Critic, ctx, &extras)?;
        let critic = self.ask(Stage::Critic, critic_prompts, gateway, &mut trace, |text| {
            parse_critic_output(text, &labels).map_err(|e| e.to_string())
        })?;
        let Some(feedback) = critic else {
            return self.fallback(ctx, &candidates, trace, "critic retries exhausted");
        };
        trace.feedback = Some(feedback.clone());
        let ranked = rank(&candidates, &feedback.ranking);

        if !feedback.need_modify {
            let top = ranked[0];
            return match validate_subgoals(&top.subgoals, available) {
                Ok(subgoals) => {
                    trace.decision = format!("adopted top-ranked {}", top.label);
                    Ok((
                        FinalPlan {
                            subgoals,
                            provenance: Provenance::AdoptedTopRanked,
                            analysis: String::new(),
                        },
                        trace,
                    ))
                }
                Err(e) => {
                    let reason = format!("top-ranked {} invalid: {e}", top.label);
                    let ranked: Vec<CandidatePlan> = ranked.into_iter().cloned().collect();
                    self.fallback(ctx, &ranked, trace, &reason)
                }
            };
        }

        let extras = PromptExtras {
            candidate_plans: Some(render_candidates(&candidates)),
            critic_feedback: Some(render_feedback(&feedback)),
            ..PromptExtras::default()
        };
        let refiner_prompts = self.render(Stage::Refiner, ctx, &extras)?;
        let refined = self.ask(
            Stage::Refiner,
            refiner_prompts,
            gateway,
            &mut trace,
            |text| {
                let out = parse_refiner_output(text).map_err(|e| e.to_string())?;
                let subgoals = validate_subgoals(&out.subgoals, available)?;
                Ok((out, subgoals))
            },
        )?;
        match refined {
            Some((out, subgoals)) => {
                trace.decision = "refined".to_string();
                let analysis = out.analysis.clone();
                trace.refiner = Some(out);
                Ok((
                    FinalPlan {
                        subgoals,
                        provenance: Provenance::Refined,
                        analysis,
                    },
                    trace,
                ))
            }
            None => {
                let ranked: Vec<CandidatePlan> = ranked.into_iter().cloned().collect();
                self.fallback(ctx, &ranked, trace, "refiner retries exhausted")
            }
        }
    }

    /// Highest-ranked valid candidate, else the context's frontier.
    fn fallback(
        &self,
        ctx: &PlanningContext,
        ranked: &[CandidatePlan],
        mut trace: PipelineTrace,
        reason: &str,
    ) -> Result<(FinalPlan, PipelineTrace), PlannerError> {
        for c in ranked {
            if let Ok(subgoals) = validate_subgoals(&c.subgoals, &ctx.available_subgoals) {
                trace.decision = format!("fallback to {} ({reason})", c.label);
                return Ok((
                    FinalPlan {
                        subgoals,
                        provenance: Provenance::Fallback,
                        analysis: String::new(),
                    },
                    trace,
                ));
            }
        }
        if ctx.frontier.len() < 3 {
            return Err(PlannerError::NotEnoughSubgoals(ctx.frontier.len()));
        }
        trace.decision = format!("fallback to frontier ({reason})");
        Ok((
            FinalPlan {
                subgoals: ctx.frontier.clone(),
                provenance: Provenance::Fallback,
                analysis: String::new(),
            },
            trace,
        ))
    }
}

/// Candidates in ranking order.
fn rank<'a>(candidates: &'a [CandidatePlan], ranking: &[String]) -> Vec<&'a CandidatePlan> {
    ranking
        .iter()
        .filter_map(|l| candidates.iter().find(|c| &c.label == l))
        .collect()
}
