//! Success rates, log-space score and run summaries.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{HarnessError, StepRecord};
use crate::gridcraft::ACHIEVEMENTS;

/// Geometric-mean score over 22 success rates given in percent.
pub fn score(success_rates: &[f64]) -> Result<f64, HarnessError> {
    if success_rates.len() != ACHIEVEMENTS.len() {
        return Err(HarnessError::Score(format!(
            "expected {} success rates, got {}",
            ACHIEVEMENTS.len(),
            success_rates.len()
        )));
    }
    if let Some(bad) = success_rates.iter().find(|s| !(0.0..=100.0).contains(*s)) {
        return Err(HarnessError::Score(format!(
            "success rate {bad} is outside [0, 100]"
        )));
    }
    if success_rates.iter().all(|&s| s == success_rates[0]) {
        return Ok(success_rates[0]);
    }
    let mean_log =
        success_rates.iter().map(|s| (1.0 + s).ln()).sum::<f64>() / success_rates.len() as f64;
    Ok(mean_log.exp() - 1.0)
}

/// One episode reconstructed from step records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub episode: u64,
    pub steps: u64,
    pub unlocked: BTreeSet<String>,
    pub env_reward: f64,
    pub extra_reward: f64,
}

/// Groups step records into episodes, in order of first appearance.
pub fn episodes_from_steps(steps: &[StepRecord]) -> Vec<EpisodeOutcome> {
    let mut out: Vec<EpisodeOutcome> = Vec::new();
    for s in steps {
        if out.last().is_none_or(|e| e.episode != s.episode) {
            out.push(EpisodeOutcome {
                episode: s.episode,
                steps: 0,
                unlocked: BTreeSet::new(),
                env_reward: 0.0,
                extra_reward: 0.0,
            });
        }
        let e = out.last_mut().expect("pushed above");
        e.steps += 1;
        e.unlocked.extend(s.new_achievements.iter().cloned());
        e.env_reward += s.env_reward;
        e.extra_reward += s.extra_reward;
    }
    out
}

/// Aggregate over any number of episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub episodes: u64,
    /// Percent of episodes in which each achievement was unlocked at least once.
    pub success_rates: BTreeMap<String, f64>,
    pub score: f64,
    pub mean_episode_reward: f64,
}

impl Report {
    pub fn from_outcomes(outcomes: &[EpisodeOutcome]) -> Result<Self, HarnessError> {
        if outcomes.is_empty() {
            return Err(HarnessError::NoEpisodes);
        }
        let n = outcomes.len() as f64;
        let success_rates: BTreeMap<String, f64> = ACHIEVEMENTS
            .iter()
            .map(|a| {
                let hits = outcomes.iter().filter(|o| o.unlocked.contains(*a)).count();
                (a.to_string(), 100.0 * hits as f64 / n)
            })
            .collect();
        let rates: Vec<f64> = ACHIEVEMENTS.iter().map(|a| success_rates[*a]).collect();
        Ok(Self {
            episodes: outcomes.len() as u64,
            score: score(&rates)?,
            mean_episode_reward: outcomes.iter().map(|o| o.env_reward).sum::<f64>() / n,
            success_rates,
        })
    }

    /// Plain-text table, one achievement per row.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<20} {:>8}", "achievement", "success");
        for (name, rate) in &self.success_rates {
            let _ = writeln!(out, "{name:<20} {rate:>7.1}%");
        }
        let _ = writeln!(out, "{:<20} {:>8}", "episodes", self.episodes);
        let _ = writeln!(
            out,
            "{:<20} {:>8.3}",
            "mean reward", self.mean_episode_reward
        );
        let _ = writeln!(out, "{:<20} {:>7.2}%", "score", self.score);
        out
    }
}

/// Pools the episodes of several runs.
pub fn summarize(logs: &[super::RunLog]) -> Result<Report, HarnessError> {
    let outcomes: Vec<EpisodeOutcome> = logs
        .iter()
        .flat_map(|l| episodes_from_steps(&l.steps))
        .collect();
    Report::from_outcomes(&outcomes)
}
