mod common;

use std::collections::BTreeSet;

use common::*;
use gridplan_core::knowledge::{lookup_entities, render_entities, SubgoalId};
use gridplan_core::llm::{Gateway, MockBackend, MockRule, MockScript, Role};
use gridplan_core::planner::*;
use gridplan_core::template::TemplateError;
use gridplan_core::tracker::TextObservation;
use proptest::prelude::*;

fn labels() -> Vec<String> {
    PLAN_LABELS.iter().map(|s| s.to_string()).collect()
}

fn obs(visible: &[&str], inventory: &[(&str, u32)]) -> TextObservation {
    TextObservation {
        visible: visible.iter().map(|s| s.to_string()).collect(),
        inventory: inventory.iter().map(|(k, n)| (k.to_string(), *n)).collect(),
        vitals: ["health", "food", "drink", "energy"]
            .iter()
            .map(|s| (s.to_string(), 9))
            .collect(),
        status: vec![],
    }
}

fn context(achieved: &[&str]) -> PlanningContext {
    let achieved: BTreeSet<SubgoalId> = achieved.iter().map(|s| id(s)).collect();
    build_context(
        &obs(&["grass", "tree"], &[]),
        &crafter_graph(),
        &crafter_kb(),
        &achieved,
        &PlannerConfig::default(),
    )
    .unwrap()
}

fn gateway(actor: Vec<String>, critic: Vec<String>, refiner: Vec<String>) -> Gateway {
    let rules = [
        (Role::Actor, actor),
        (Role::Critic, critic),
        (Role::Refiner, refiner),
    ]
    .into_iter()
    .filter(|(_, r)| !r.is_empty())
    .map(|(role, r)| MockRule::for_role(role, r))
    .collect();
    Gateway::new(Box::new(MockBackend::new(MockScript { rules }).unwrap()))
}

fn ids(v: &[SubgoalId]) -> Vec<&str> {
    v.iter().map(SubgoalId::as_str).collect()
}

#[test]
fn appendix_outputs_parse() {
    let a = parse_actor_output(&transcript("case_a_actor.txt")).unwrap();
    assert_eq!(
        a[0].subgoals,
        ["collect_wood", "place_table", "make_wood_sword"]
    );
    assert_eq!(
        a[2].subgoals,
        ["collect_sapling", "place_plant", "eat_plant"]
    );
    let b = parse_actor_output(&transcript("case_b_actor.txt")).unwrap();
    assert_eq!(
        b[0].subgoals,
        [
            "collect_wood make_wood_sword",
            "collect_wood",
            "defeat_zombie"
        ]
    );
    let c = parse_actor_output(&transcript("case_c_actor.txt")).unwrap();
    assert_eq!(
        c[0].subgoals,
        ["collect_iron", "make_iron_pickaxe", "make_iron_sword"]
    );

    let fa = parse_critic_output(&transcript("case_a_critic.txt"), &labels()).unwrap();
    assert_eq!(fa.ranking, ["PlanA", "PlanC", "PlanB"]);
    assert!(!fa.need_modify);
    let fb = parse_critic_output(&transcript("case_b_critic.txt"), &labels()).unwrap();
    assert_eq!(fb.ranking, ["PlanB", "PlanC", "PlanA"]);
    let fc = parse_critic_output(&transcript("case_c_critic.txt"), &labels()).unwrap();
    assert!(fc.need_modify);
    assert_eq!(fc.per_plan.len(), 3);

    let r = parse_refiner_output(&transcript("case_c_refiner.txt")).unwrap();
    assert_eq!(
        r.subgoals,
        ["defeat_skeleton", "place_furnace", "collect_iron"]
    );
    assert!(r.analysis.starts_with("1. PlanA"));
}

/// Byte offsets of the structural delimiters: the first `<` and last `>` of
/// every block line plus the commas of subgoal and ranking lists.
fn delimiters(text: &str) -> Vec<usize> {
    let mut out = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        if let (Some(open), Some(close)) = (line.find('<'), line.rfind('>')) {
            out.push(offset + open);
            out.push(offset + close);
            let label = &line[..open];
            if label.starts_with("Plan") && !label.contains("feedback")
                || label == "Ranking"
                || label == "Final_Plan"
            {
                out.extend(
                    line[open..close]
                        .match_indices(',')
                        .map(|(i, _)| offset + open + i),
                );
            }
        }
        offset += line.len();
    }
    out
}

#[test]
fn deleting_any_delimiter_is_rejected() {
    type Parser = fn(&str) -> bool;
    let cases: [(&str, Parser); 7] = [
        ("case_a_actor.txt", |t| parse_actor_output(t).is_ok()),
        ("case_b_actor.txt", |t| parse_actor_output(t).is_ok()),
        ("case_c_actor.txt", |t| parse_actor_output(t).is_ok()),
        ("case_a_critic.txt", |t| {
            parse_critic_output(t, &labels()).is_ok()
        }),
        ("case_b_critic.txt", |t| {
            parse_critic_output(t, &labels()).is_ok()
        }),
        ("case_c_critic.txt", |t| {
            parse_critic_output(t, &labels()).is_ok()
        }),
        ("case_c_refiner.txt", |t| parse_refiner_output(t).is_ok()),
    ];
    for (name, parses) in cases {
        let text = transcript(name);
        assert!(parses(&text), "{name} should parse");
        let spots = delimiters(&text);
        assert!(spots.len() >= 4, "{name}");
        for at in spots {
            let mut mutated = text.clone();
            mutated.remove(at);
            assert!(!parses(&mutated), "{name}: deleting byte {at} was accepted");
        }
    }
}

#[test]
fn context_entity_info_and_weights() {
    let kb = crafter_kb();
    let ctx = build_context(
        &obs(&["tree", "zombie"], &[]),
        &crafter_graph(),
        &kb,
        &BTreeSet::new(),
        &PlannerConfig::default(),
    )
    .unwrap();
    let expected = lookup_entities(&kb, ["tree", "zombie"]).found;
    assert_eq!(expected.len(), 2);
    assert_eq!(ctx.entity_info, render_entities(&expected));
    assert_eq!(ctx.unachieved.len(), 22);
    assert_eq!(ctx.available_subgoals.len(), 22);
    assert!(ctx
        .graph_text
        .lines()
        .flat_map(|l| l.split("; "))
        .all(|e| e.ends_with("(-%)")));

    let all: Vec<String> = crafter_graph().ids().map(ToString::to_string).collect();
    let all: Vec<&str> = all.iter().map(String::as_str).collect();
    assert!(context(&all).unachieved.is_empty());
}

#[test]
fn frontier_only_restricts_available_set() {
    let cfg = PlannerConfig {
        frontier_only: true,
        ..PlannerConfig::default()
    };
    let ctx = build_context(
        &obs(&[], &[("wood", 2)]),
        &crafter_graph(),
        &crafter_kb(),
        &[id("collect_wood")].into(),
        &cfg,
    )
    .unwrap();
    assert!(ctx.available_subgoals.contains("place_table"));
    assert!(!ctx.available_subgoals.contains("collect_wood"));
    assert!(!ctx.available_subgoals.contains("make_wood_pickaxe"));
}

#[test]
fn prompt_rendering() {
    let ctx = context(&[]);
    let planner = Planner::new(PlannerConfig::default()).unwrap();
    let (system, user) = planner
        .render(Stage::Actor, &ctx, &PromptExtras::default())
        .unwrap();
    assert!(user.starts_with("Player's State: <You see: grass, tree\nInventory: none"));
    assert!(
        system.contains("[SUBGOAL GRAPH GRAMMAR]\n- One line is one depth layer."),
        "{system}"
    );
    assert!(!system.contains('{') && !user.contains("{"));

    match planner.render(Stage::Critic, &ctx, &PromptExtras::default()) {
        Err(PlannerError::MissingExtra {
            stage: Stage::Critic,
            name,
        }) => assert_eq!(name, "actor_output"),
        other => panic!("expected missing extra, got {other:?}"),
    }

    let mut templates = Templates::bundled();
    templates.set(Stage::Actor, false, "State: {text_obs} {unknown}");
    let planner = Planner::with_templates(PlannerConfig::default(), templates);
    match planner.render(Stage::Actor, &ctx, &PromptExtras::default()) {
        Err(PlannerError::Template(TemplateError::UnknownPlaceholder(n))) => {
            assert_eq!(n, "unknown")
        }
        other => panic!("expected unknown placeholder, got {other:?}"),
    }
}

#[test]
fn templates_load_from_directory() {
    let dir = tempfile::tempdir().unwrap();
    let src = gridplan_core::fixtures_dir().join("../templates");
    for e in std::fs::read_dir(&src).unwrap() {
        let e = e.unwrap();
        std::fs::copy(e.path(), dir.path().join(e.file_name())).unwrap();
    }
    assert_eq!(
        Templates::from_dir(dir.path()).unwrap(),
        Templates::bundled()
    );
    std::fs::remove_file(dir.path().join("critic_user.txt")).unwrap();
    assert!(matches!(
        Templates::from_dir(dir.path()),
        Err(PlannerError::TemplateFile { .. })
    ));
}

#[test]
fn case_a_adopts_top_ranked_without_refiner() {
    let planner = Planner::new(PlannerConfig::default()).unwrap();
    let ctx = context(&[]);
    let mut runs = Vec::new();
    for _ in 0..2 {
        let mut gw = gateway(
            vec![transcript("case_a_actor.txt")],
            vec![transcript("case_a_critic.txt")],
            vec![],
        );
        let (plan, trace) = planner
            .generate_plan(&ctx, &crafter_graph(), &mut gw)
            .unwrap();
        assert_eq!(
            ids(&plan.subgoals),
            ["collect_wood", "place_table", "make_wood_sword"]
        );
        assert_eq!(plan.provenance, Provenance::AdoptedTopRanked);
        assert_eq!(trace.llm_calls(), 2);
        assert_eq!(gw.calls(), 2);
        assert_eq!(trace.stage_calls(Stage::Refiner), 0);
        runs.push((plan, trace, gw.transcript().to_vec()));
    }
    assert_eq!(runs[0].0, runs[1].0);
    assert_eq!(runs[0].1, runs[1].1);
    assert_eq!(
        runs[0].2.iter().map(|e| &e.user_prompt).collect::<Vec<_>>(),
        runs[1].2.iter().map(|e| &e.user_prompt).collect::<Vec<_>>()
    );
}

#[test]
fn case_b_adopts_critic_choice_over_malformed_candidate() {
    let planner = Planner::new(PlannerConfig::default()).unwrap();
    let mut gw = gateway(
        vec![transcript("case_b_actor.txt")],
        vec![transcript("case_b_critic.txt")],
        vec![],
    );
    let (plan, trace) = planner
        .generate_plan(&context(&[]), &crafter_graph(), &mut gw)
        .unwrap();
    assert_eq!(
        ids(&plan.subgoals),
        ["collect_stone", "make_stone_pickaxe", "make_stone_sword"]
    );
    assert_eq!(plan.provenance, Provenance::AdoptedTopRanked);
    assert_eq!(trace.llm_calls(), 2);
}

#[test]
fn case_c_runs_refiner() {
    let planner = Planner::new(PlannerConfig::default()).unwrap();
    let mut gw = gateway(
        vec![transcript("case_c_actor.txt")],
        vec![transcript("case_c_critic.txt")],
        vec![transcript("case_c_refiner.txt")],
    );
    let (plan, trace) = planner
        .generate_plan(&context(&[]), &crafter_graph(), &mut gw)
        .unwrap();
    assert_eq!(
        ids(&plan.subgoals),
        ["defeat_skeleton", "place_furnace", "collect_iron"]
    );
    assert_eq!(plan.provenance, Provenance::Refined);
    assert_eq!(trace.llm_calls(), 3);
    // refiner sees every candidate and the critic's verdict
    let refiner_prompt = &gw.transcript()[2].user_prompt;
    assert!(refiner_prompt.contains("PlanB<collect_sapling,place_plant,eat_plant>"));
    assert!(refiner_prompt.contains("Need_Modify<yes>"));
    // critic sees subgoal details of the candidates
    assert!(gw.transcript()[1]
        .user_prompt
        .contains("make_iron_pickaxe:"));
}

/// Unachieved subgoals with no preconditions, alphabetically; with an empty
/// inventory and nothing achieved this is the fallback plan.
fn frontier_oracle(achieved: &BTreeSet<String>) -> Vec<String> {
    let g = crafter_graph();
    let mut free: Vec<String> = g
        .nodes()
        .iter()
        .filter(|(i, n)| n.preconditions.is_empty() && !achieved.contains(i.as_str()))
        .map(|(i, _)| i.to_string())
        .collect();
    free.sort();
    free.truncate(3);
    free
}

#[test]
fn garbage_actor_falls_back_to_frontier() {
    let planner = Planner::new(PlannerConfig::default()).unwrap();
    let mut gw = gateway(
        vec!["I think you should chop trees.".into()],
        vec![],
        vec![],
    );
    let (plan, trace) = planner
        .generate_plan(&context(&[]), &crafter_graph(), &mut gw)
        .unwrap();
    assert_eq!(plan.provenance, Provenance::Fallback);
    assert_eq!(trace.stage_calls(Stage::Actor), 3);
    assert_eq!(trace.llm_calls(), 3);
    assert_eq!(ids(&plan.subgoals), frontier_oracle(&BTreeSet::new()));

    let mut gw = gateway(vec!["nope".into()], vec![], vec![]);
    let (plan, _) = planner
        .generate_plan(&context(&["collect_sapling"]), &crafter_graph(), &mut gw)
        .unwrap();
    assert_eq!(
        ids(&plan.subgoals),
        frontier_oracle(&["collect_sapling".to_string()].into())
    );
}

#[test]
fn retry_recovers_and_invalid_refinement_falls_back_to_ranking() {
    let planner = Planner::new(PlannerConfig::default()).unwrap();
    let mut gw = gateway(
        vec!["garbage".into(), transcript("case_c_actor.txt")],
        vec![transcript("case_c_critic.txt")],
        vec!["Final_Plan<collect_gold,place_table,sleep>".into()],
    );
    let (plan, trace) = planner
        .generate_plan(&context(&[]), &crafter_graph(), &mut gw)
        .unwrap();
    assert_eq!(trace.stage_calls(Stage::Actor), 2);
    assert_eq!(trace.stage_calls(Stage::Refiner), 3);
    assert_eq!(plan.provenance, Provenance::Fallback);
    // ranking is PlanA, PlanC, PlanB and PlanA is valid
    assert_eq!(
        ids(&plan.subgoals),
        ["collect_iron", "make_iron_pickaxe", "make_iron_sword"]
    );
}

#[test]
fn invalid_top_ranked_without_refinement_falls_back() {
    let planner = Planner::new(PlannerConfig::default()).unwrap();
    let critic = transcript("case_b_critic.txt")
        .replace("Ranking<PlanB,PlanC,PlanA>", "Ranking<PlanA,PlanC,PlanB>");
    let mut gw = gateway(vec![transcript("case_b_actor.txt")], vec![critic], vec![]);
    let (plan, trace) = planner
        .generate_plan(&context(&[]), &crafter_graph(), &mut gw)
        .unwrap();
    assert_eq!(plan.provenance, Provenance::Fallback);
    assert_eq!(
        ids(&plan.subgoals),
        ["eat_cow", "make_wood_sword", "defeat_zombie"]
    );
    assert_eq!(trace.llm_calls(), 2);
}

fn response_pool() -> Vec<String> {
    let mut pool: Vec<String> = [
        "case_a_actor.txt",
        "case_b_actor.txt",
        "case_c_actor.txt",
        "case_a_critic.txt",
        "case_b_critic.txt",
        "case_c_critic.txt",
        "case_c_refiner.txt",
    ]
    .iter()
    .map(|n| transcript(n))
    .collect();
    pool.push(String::new());
    pool.push("Final_Plan<sleep,sleep,eat_cow>".into());
    pool.push("Final_Plan<sleep,collect_wood,eat_cow>".into());
    pool.push("Ranking<PlanA,PlanB,PlanC>\nNeed_Modify<maybe>".into());
    pool
}

prop_compose! {
    fn response()(pick in 0usize..11, cut in any::<prop::sample::Index>(), names in prop::collection::vec(
        prop::sample::select(vec!["collect_wood", "place_table", "sleep", "eat_cow", "make_gold_sword", "collect_stone"]), 9),
        flag in any::<bool>(), mode in 0u8..4) -> String {
        let pool = response_pool();
        match mode {
            // fixture, possibly truncated
            0 => {
                let t = &pool[pick];
                let mut at = cut.index(t.len() + 1);
                while !t.is_char_boundary(at) { at -= 1; }
                t[..at].to_string()
            }
            1 => pool[pick].clone(),
            2 => format!(
                "PlanA<{},{},{}>\nReasonA<x>\nPlanB<{},{},{}>\nReasonB<y>\nPlanC<{},{},{}>\nReasonC<z>",
                names[0], names[1], names[2], names[3], names[4], names[5], names[6], names[7], names[8]
            ),
            _ => format!(
                "PlanA_feedback<a>\nPlanB_feedback<b>\nPlanC_feedback<c>\nRanking<PlanC,PlanA,PlanB>\nNeed_Modify<{}>\nFinal_Plan<{},{},{}>",
                if flag { "yes" } else { "no" }, names[0], names[1], names[2]
            ),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]
    #[test]
    fn every_returned_plan_is_valid(
        actor in prop::collection::vec(response(), 1..4),
        critic in prop::collection::vec(response(), 1..4),
        refiner in prop::collection::vec(response(), 1..4),
    ) {
        let planner = Planner::new(PlannerConfig::default()).unwrap();
        let ctx = context(&[]);
        let mut gw = gateway(actor.clone(), critic.clone(), refiner.clone());
        let (plan, trace) = planner.generate_plan(&ctx, &crafter_graph(), &mut gw).unwrap();
        prop_assert_eq!(plan.subgoals.len(), 3);
        let distinct: BTreeSet<_> = plan.subgoals.iter().collect();
        prop_assert_eq!(distinct.len(), 3);
        prop_assert!(plan.subgoals.iter().all(|s| ctx.available_subgoals.contains(s)));
        prop_assert_eq!(trace.llm_calls(), gw.calls());
        // flag short-circuit, counting accepted stages only
        if let Some(fb) = &trace.feedback {
            prop_assert_eq!(trace.stage_calls(Stage::Refiner) > 0, fb.need_modify);
        }
        let mut again = gateway(actor, critic, refiner);
        prop_assert_eq!(planner.generate_plan(&ctx, &crafter_graph(), &mut again).unwrap(), (plan, trace));
    }
}
