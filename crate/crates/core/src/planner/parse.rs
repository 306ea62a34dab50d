//! Strict parsers for the `Label<content>` response formats.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::ParseError;

pub const PLAN_LABELS: [&str; 3] = ["PlanA", "PlanB", "PlanC"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidatePlan {
    pub label: String,
    /// Raw subgoal names as written; membership is checked later.
    pub subgoals: Vec<String>,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriticFeedback {
    /// (label, feedback text) in the order the labels were given.
    pub per_plan: Vec<(String, String)>,
    pub ranking: Vec<String>,
    pub need_modify: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinerOutput {
    pub analysis: String,
    pub subgoals: Vec<String>,
}

struct Block {
    label: String,
    content: String,
    line: usize,
}

/// Splits `text` into `Label<content>` blocks. A block opens on a line that
/// starts with `Label<` and closes on the first line ending in `>`; stray
/// double quotes around a line are ignored.
fn blocks(text: &str) -> Result<Vec<Block>, ParseError> {
    let mut out = Vec::new();
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim().trim_matches('"').trim()));
    while let Some((line, first)) = lines.next() {
        if first.is_empty() {
            continue;
        }
        let open = first.find('<').ok_or_else(|| ParseError::Unexpected {
            line,
            text: first.to_string(),
        })?;
        let label = &first[..open];
        if label.is_empty() || !label.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(ParseError::Unexpected {
                line,
                text: first.to_string(),
            });
        }
        let mut body = first[open + 1..].to_string();
        while !body.ends_with('>') {
            match lines.next() {
                Some((_, more)) => {
                    body.push('\n');
                    body.push_str(more);
                }
                None => {
                    return Err(ParseError::Unterminated {
                        label: label.to_string(),
                        line,
                    })
                }
            }
        }
        body.pop();
        out.push(Block {
            label: label.to_string(),
            content: body.trim().to_string(),
            line,
        });
    }
    Ok(out)
}

fn expect<'a>(blocks: &'a [Block], pos: &mut usize, label: &str) -> Result<&'a Block, ParseError> {
    match blocks.get(*pos) {
        Some(b) if b.label == label => {
            *pos += 1;
            Ok(b)
        }
        Some(b) if blocks[*pos..].iter().any(|x| x.label == label) => Err(ParseError::Unexpected {
            line: b.line,
            text: format!("{}<...>", b.label),
        }),
        _ => Err(ParseError::MissingLabel(label.to_string())),
    }
}

fn finish(blocks: &[Block], pos: usize) -> Result<(), ParseError> {
    match blocks.get(pos) {
        Some(b) => Err(ParseError::Trailing {
            line: b.line,
            label: b.label.clone(),
        }),
        None => Ok(()),
    }
}

fn subgoal_list(label: &str, content: &str) -> Result<Vec<String>, ParseError> {
    let items: Vec<String> = content.split(',').map(|s| s.trim().to_string()).collect();
    if items.len() != 3 || items.iter().any(String::is_empty) {
        return Err(ParseError::Arity {
            label: label.to_string(),
            found: items.iter().filter(|s| !s.is_empty()).count(),
        });
    }
    let mut seen = BTreeSet::new();
    for item in &items {
        if !seen.insert(item.as_str()) {
            return Err(ParseError::Duplicate {
                label: label.to_string(),
                subgoal: item.clone(),
            });
        }
    }
    Ok(items)
}

/// Exactly `PlanA, ReasonA, PlanB, ReasonB, PlanC, ReasonC`, in that order.
pub fn parse_actor_output(text: &str) -> Result<Vec<CandidatePlan>, ParseError> {
    let blocks = blocks(text)?;
    let mut pos = 0;
    let mut plans = Vec::new();
    for label in PLAN_LABELS {
        let plan = expect(&blocks, &mut pos, label)?;
        let subgoals = subgoal_list(label, &plan.content)?;
        let reason_label = format!("Reason{}", &label[4..]);
        let reason = expect(&blocks, &mut pos, &reason_label)?;
        if reason.content.is_empty() {
            return Err(ParseError::Empty(reason_label));
        }
        plans.push(CandidatePlan {
            label: label.to_string(),
            subgoals,
            rationale: reason.content.clone(),
        });
    }
    finish(&blocks, pos)?;
    Ok(plans)
}

/// One `<Label>_feedback` block per label, then `Ranking` and `Need_Modify`.
pub fn parse_critic_output(text: &str, labels: &[String]) -> Result<CriticFeedback, ParseError> {
    let blocks = blocks(text)?;
    let mut pos = 0;
    let mut per_plan = Vec::new();
    for label in labels {
        let name = format!("{label}_feedback");
        let b = expect(&blocks, &mut pos, &name)?;
        if b.content.is_empty() {
            return Err(ParseError::Empty(name));
        }
        per_plan.push((label.clone(), b.content.clone()));
    }
    let ranking: Vec<String> = expect(&blocks, &mut pos, "Ranking")?
        .content
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let mut sorted_rank = ranking.clone();
    sorted_rank.sort();
    let mut sorted_labels = labels.to_vec();
    sorted_labels.sort();
    if sorted_rank != sorted_labels {
        return Err(ParseError::Ranking(ranking.join(",")));
    }
    let flag = expect(&blocks, &mut pos, "Need_Modify")?
        .content
        .to_ascii_lowercase();
    let need_modify = match flag.as_str() {
        "yes" => true,
        "no" => false,
        other => return Err(ParseError::Flag(other.to_string())),
    };
    finish(&blocks, pos)?;
    Ok(CriticFeedback {
        per_plan,
        ranking,
        need_modify,
    })
}

/// Optional `Analysis`, then `Final_Plan`.
pub fn parse_refiner_output(text: &str) -> Result<RefinerOutput, ParseError> {
    let blocks = blocks(text)?;
    let mut pos = 0;
    let analysis = match blocks.first() {
        Some(b) if b.label == "Analysis" => {
            pos = 1;
            b.content.clone()
        }
        _ => String::new(),
    };
    let plan = expect(&blocks, &mut pos, "Final_Plan")?;
    let subgoals = subgoal_list("Final_Plan", &plan.content)?;
    finish(&blocks, pos)?;
    Ok(RefinerOutput { analysis, subgoals })
}

/// Re-renders candidates in the actor's own format.
pub fn render_candidates(plans: &[CandidatePlan]) -> String {
    plans
        .iter()
        .map(|p| {
            format!(
                "{}<{}>\nReason{}<{}>",
                p.label,
                p.subgoals.join(","),
                &p.label[4..],
                p.rationale
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Re-renders critic feedback in the critic's own format.
pub fn render_feedback(fb: &CriticFeedback) -> String {
    let mut lines: Vec<String> = fb
        .per_plan
        .iter()
        .map(|(l, t)| format!("{l}_feedback<{t}>"))
        .collect();
    lines.push(format!("Ranking<{}>", fb.ranking.join(",")));
    lines.push(format!(
        "Need_Modify<{}>",
        if fb.need_modify { "yes" } else { "no" }
    ));
    lines.join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    const ACTOR: &str =
        "PlanA<a,b,c>\nReasonA<r1>\nPlanB<d, e ,f>\nReasonB<r2>\nPlanC<g,h,i>\nReasonC<r3>\n";

    fn labels() -> Vec<String> {
        PLAN_LABELS.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn actor_tolerates_spaces_and_blank_lines() {
        let plans = parse_actor_output(&format!("\n{ACTOR}\n")).unwrap();
        assert_eq!(plans[1].subgoals, ["d", "e", "f"]);
        assert_eq!(plans[2].rationale, "r3");
    }

    #[test]
    fn actor_errors() {
        assert_eq!(
            parse_actor_output("PlanA<a,b,c>\nReasonA<r>\nPlanB<d,e,f>\nReasonB<r>"),
            Err(ParseError::MissingLabel("PlanC".into()))
        );
        assert!(matches!(
            parse_actor_output(&ACTOR.replace("<a,b,c>", "<a,a,b>")),
            Err(ParseError::Duplicate { .. })
        ));
        assert!(matches!(
            parse_actor_output(&ACTOR.replace("<a,b,c>", "<a,b>")),
            Err(ParseError::Arity { .. })
        ));
        assert!(matches!(
            parse_actor_output(&format!("{ACTOR}Extra<x>")),
            Err(ParseError::Trailing { .. })
        ));
        assert!(matches!(
            parse_actor_output(&format!("{ACTOR}thanks")),
            Err(ParseError::Unexpected { .. })
        ));
        assert_eq!(
            parse_actor_output(&ACTOR.replace("ReasonA<r1>\n", "")),
            Err(ParseError::MissingLabel("ReasonA".into()))
        );
        let swapped =
            "PlanA<a,b,c>\nReasonA<r1>\nPlanC<g,h,i>\nReasonC<r3>\nPlanB<d,e,f>\nReasonB<r2>";
        assert!(matches!(
            parse_actor_output(swapped),
            Err(ParseError::Unexpected { line: 3, .. })
        ));
    }

    #[test]
    fn multi_line_block_content() {
        let text = ACTOR.replace("ReasonA<r1>", "ReasonA<first\nsecond>");
        assert_eq!(
            parse_actor_output(&text).unwrap()[0].rationale,
            "first\nsecond"
        );
    }

    #[test]
    fn critic_flag_case_and_ranking() {
        let text = "PlanA_feedback<x>\nPlanB_feedback<y>\nPlanC_feedback<z>\nRanking<PlanB, PlanA,PlanC>\nNeed_Modify<YES>";
        let fb = parse_critic_output(text, &labels()).unwrap();
        assert!(fb.need_modify);
        assert_eq!(fb.ranking, ["PlanB", "PlanA", "PlanC"]);
        assert_eq!(
            parse_critic_output(&render_feedback(&fb), &labels()).unwrap(),
            fb
        );
        let bad = text.replace("PlanB, PlanA", "PlanA,PlanA");
        assert!(matches!(
            parse_critic_output(&bad, &labels()),
            Err(ParseError::Ranking(_))
        ));
        let bad = text.replace("YES", "maybe");
        assert!(matches!(
            parse_critic_output(&bad, &labels()),
            Err(ParseError::Flag(_))
        ));
    }

    #[test]
    fn refiner_analysis_optional() {
        let out = parse_refiner_output("Final_Plan<a,b,c>").unwrap();
        assert!(out.analysis.is_empty());
        assert!(matches!(
            parse_refiner_output("Final_Plan<a,b>"),
            Err(ParseError::Arity { .. })
        ));
        assert!(parse_refiner_output("Analysis<x>").is_err());
    }

    #[test]
    fn candidates_round_trip() {
        let plans = parse_actor_output(ACTOR).unwrap();
        assert_eq!(
            parse_actor_output(&render_candidates(&plans)).unwrap(),
            plans
        );
    }
}
