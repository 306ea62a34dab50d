mod common;

use std::collections::BTreeSet;

use common::*;
use gridplan_core::knowledge::*;
use gridplan_core::llm::{Gateway, MockBackend, MockRule, MockScript, Role};
use proptest::prelude::*;

const APPENDIX_GRAPH: &str = include_str!("../fixtures/crafter_graph.verbalized.txt");

fn write_tmp(dir: &tempfile::TempDir, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn fixture_graph_has_22_nodes_and_7_roots() {
    let g = crafter_graph();
    assert_eq!(g.len(), 22);
    let roots: Vec<String> = g.roots().iter().map(ToString::to_string).collect();
    assert_eq!(
        roots,
        [
            "collect_sapling",
            "collect_water",
            "collect_wood",
            "defeat_skeleton",
            "defeat_zombie",
            "eat_cow",
            "sleep"
        ]
    );
    assert!(g
        .weights()
        .values()
        .all(|c| c.planned == 0 && c.achieved == 0));
}

#[test]
fn fixture_files_are_canonical() {
    let text = std::fs::read_to_string(fixture("crafter_graph.json")).unwrap();
    assert_eq!(
        parse_graph_document(&text).unwrap().to_canonical_json(),
        text
    );
    let text = std::fs::read_to_string(fixture("crafter_kb.json")).unwrap();
    assert_eq!(parse_kb_document(&text).unwrap().to_canonical_json(), text);
}

#[test]
fn empty_node_list_loads_as_empty_graph() {
    let dir = tempfile::tempdir().unwrap();
    let g = load_graph(&write_tmp(&dir, "g.json", r#"{"subgoals": []}"#)).unwrap();
    assert!(g.is_empty());
    assert!(g.roots().is_empty());
    assert_eq!(verbalize(&g, true).unwrap(), "");
}

#[test]
fn edge_to_undeclared_node_is_schema_violation() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{"subgoals": [
        {"id": "defeat_zombie", "description": "d", "postconditions": [{"object": "zombie", "change": "disappear"}],
         "dependency": {"kind": "or", "sources": ["make_gold_sword"]}}
    ]}"#;
    let err = load_graph(&write_tmp(&dir, "g.json", text)).unwrap_err();
    match err {
        KnowledgeError::Schema(msg) => assert!(msg.contains("make_gold_sword")),
        other => panic!("expected schema violation, got {other}"),
    }
}

#[test]
fn duplicate_ids_and_parse_errors_are_located() {
    let dir = tempfile::tempdir().unwrap();
    let dup = r#"{"subgoals": [
        {"id": "a", "description": "", "postconditions": [{"object": "x", "change": 1}]},
        {"id": "a", "description": "", "postconditions": [{"object": "x", "change": 1}]}
    ]}"#;
    assert!(
        matches!(load_graph(&write_tmp(&dir, "d.json", dup)), Err(KnowledgeError::DuplicateId(id)) if id == "a")
    );

    let bad = "{\"subgoals\": [\n  {\"id\": \"a\", \"description\": \"\",\n   \"postconditions\": [{\"object\": \"x\", \"change\": 0}]}\n]}";
    match load_graph(&write_tmp(&dir, "b.json", bad)) {
        Err(KnowledgeError::Parse { line, field, .. }) => {
            assert_eq!(line, 3);
            assert!(field.contains("postconditions"), "{field}");
        }
        other => panic!("expected parse error, got {other:?}"),
    }
    let bad_id =
        r#"{"subgoals": [{"id": "Collect Wood", "description": "", "postconditions": []}]}"#;
    assert!(matches!(
        load_graph(&write_tmp(&dir, "i.json", bad_id)),
        Err(KnowledgeError::Parse { .. })
    ));
}

#[test]
fn fixture_validates_clean_and_agrees_with_dfs_oracle() {
    let g = crafter_graph();
    assert!(validate_graph(&g).is_clean());
    assert!(!dfs_has_cycle(&g));
}

fn node(id_: &str, pre: &[&str], dep: Option<(DependencyKind, &[&str])>) -> SubgoalEntry {
    SubgoalEntry {
        id: id(id_),
        description: String::new(),
        preconditions: pre
            .iter()
            .map(|p| Condition::SubgoalAchieved(id(p)))
            .collect(),
        postconditions: vec![StateChangeSpec {
            object: id_.into(),
            change: Change::Appear,
        }],
        dependency: dep.map(|(kind, s)| Dependency {
            kind,
            sources: s.iter().map(|x| id(x)).collect(),
        }),
        review: None,
    }
}

#[test]
fn two_node_cycle_is_reported_with_both_nodes() {
    let doc = GraphDocument {
        subgoals: vec![
            node("a", &["b"], Some((DependencyKind::And, &["b"]))),
            node("b", &["a"], Some((DependencyKind::And, &["a"]))),
        ],
    };
    let g = SubgoalGraph::from_document(&doc).unwrap();
    assert!(dfs_has_cycle(&g));
    let report = g.validate();
    assert!(report
        .findings
        .iter()
        .any(|f| matches!(f, Finding::Cycle { nodes } if nodes == &[id("a"), id("b")])));
    assert!(verbalize(&g, false).is_err());
}

#[test]
fn precondition_without_incoming_edge_is_reported() {
    let doc = GraphDocument {
        subgoals: vec![
            node("a", &[], None),
            node("b", &[], None),
            node("c", &["b"], Some((DependencyKind::And, &["a"]))),
        ],
    };
    let report = SubgoalGraph::from_document(&doc).unwrap().validate();
    assert!(report.findings.contains(&Finding::PreconditionWithoutEdge {
        node: id("c"),
        prerequisite: id("b")
    }));
    assert!(report.findings.contains(&Finding::EdgeWithoutPrecondition {
        node: id("c"),
        prerequisite: id("a")
    }));
}

#[test]
fn verbalize_reproduces_appendix_layers() {
    let g = crafter_graph();
    let text = verbalize(&g, false).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[2].contains("collect_wood & place_table -> make_wood_pickaxe"));
    let expected: Vec<&str> = APPENDIX_GRAPH.lines().map(str::trim_end).collect();
    assert_eq!(lines, expected);
}

#[test]
fn verbalize_single_root_and_weight_suffixes() {
    let doc = GraphDocument {
        subgoals: vec![node("collect_wood", &[], None)],
    };
    let mut g = SubgoalGraph::from_document(&doc).unwrap();
    assert_eq!(verbalize(&g, false).unwrap(), "collect_wood");
    assert_eq!(verbalize(&g, true).unwrap(), "collect_wood (-%)");
    *g.counter_mut(&SlotKey::Root(id("collect_wood"))).unwrap() = Counter {
        planned: 4,
        achieved: 3,
    };
    assert_eq!(verbalize(&g, true).unwrap(), "collect_wood (75%)");
}

#[test]
fn fresh_fixture_shows_undefined_weights_everywhere() {
    let text = verbalize(&crafter_graph(), true).unwrap();
    let entries: Vec<&str> = text.lines().flat_map(|l| l.split("; ")).collect();
    assert_eq!(entries.len(), 7 + 2 + 3 + 4 + 4 + 3 + 2 + 3);
    assert!(entries.iter().all(|e| e.ends_with(" (-%)")), "{text}");
}

#[test]
fn percent_rounds_to_nearest() {
    assert_eq!(
        Counter {
            planned: 3,
            achieved: 1
        }
        .percent(),
        Some(33)
    );
    assert_eq!(
        Counter {
            planned: 3,
            achieved: 2
        }
        .percent(),
        Some(67)
    );
    assert_eq!(
        Counter {
            planned: 8,
            achieved: 1
        }
        .percent(),
        Some(13)
    );
    assert_eq!(
        Counter {
            planned: 0,
            achieved: 0
        }
        .percent(),
        None
    );
}

#[test]
fn parse_appendix_text_recovers_fixture_structure() {
    let parsed = parse_verbalized(APPENDIX_GRAPH).unwrap();
    assert_eq!(parsed.len(), 22);
    assert_eq!(structure(&parsed), structure(&crafter_graph()));
    // zombies: three OR alternatives, one per sword
    let alts: Vec<String> = parsed
        .or_alternatives("defeat_zombie")
        .unwrap()
        .iter()
        .map(ToString::to_string)
        .collect();
    assert_eq!(
        alts,
        ["make_iron_sword", "make_stone_sword", "make_wood_sword"]
    );
}

#[test]
fn parse_verbalized_errors() {
    assert!(matches!(
        parse_verbalized(""),
        Err(KnowledgeError::EmptyStructure)
    ));
    assert!(matches!(
        parse_verbalized("  \n "),
        Err(KnowledgeError::EmptyStructure)
    ));
    match parse_verbalized("a\na & -> x") {
        Err(KnowledgeError::Grammar { line, .. }) => assert_eq!(line, 2),
        other => panic!("expected grammar error, got {other:?}"),
    }
    // wrong layer
    assert!(matches!(
        parse_verbalized("a\nb -> c\na -> b"),
        Err(KnowledgeError::Grammar { line: 2, .. })
    ));
    // target mentioned nowhere as root or AND target
    assert!(parse_verbalized("a\na -> b; c -> d").is_err());
    // weights are tolerated
    let g = parse_verbalized("a (50%); b (-%)\na & b -> c (100%)").unwrap();
    assert_eq!(g.and_group("c").unwrap().len(), 2);
}

#[test]
fn subgoal_details_examples() {
    let g = crafter_graph();
    let d = subgoal_details(&g, ["make_wood_pickaxe"], 0).unwrap();
    assert_eq!(d.len(), 1);
    assert!(d[0]
        .preconditions
        .contains(&"collect_wood achieved".to_string()));
    assert!(d[0]
        .preconditions
        .contains(&"place_table achieved".to_string()));

    assert!(subgoal_details(&g, std::iter::empty(), 0)
        .unwrap()
        .is_empty());

    let d = subgoal_details(&g, ["defeat_zombie"], 1).unwrap();
    let ids: Vec<String> = d.iter().map(|r| r.id.to_string()).collect();
    assert_eq!(
        ids,
        [
            "defeat_zombie",
            "make_iron_sword",
            "make_stone_sword",
            "make_wood_sword"
        ]
    );
    assert_eq!(d[0].distance, 0);

    assert!(matches!(
        subgoal_details(&g, ["make_gold_sword"], 0),
        Err(KnowledgeError::UnknownSubgoal(_))
    ));
    assert!(render_details(&d).contains("defeat_zombie:"));
}

#[test]
fn lookup_entities_examples() {
    let kb = crafter_kb();
    let hit = lookup_entities(&kb, ["zombie"]);
    assert_eq!(hit.found.len(), 1);
    assert!(hit.found[0].related_subgoals.contains(&id("defeat_zombie")));
    assert_eq!(
        lookup_entities(&kb, std::iter::empty()),
        EntityLookup::default()
    );
    let miss = lookup_entities(&kb, ["unobtanium"]);
    assert!(miss.found.is_empty());
    assert_eq!(miss.unknown, ["unobtanium"]);
    assert!(kb.validate_against(&crafter_graph()).is_clean());
}

fn small_kb(names: &[&str]) -> EntityKb {
    EntityKb::from_document(&KbDocument {
        entities: names
            .iter()
            .map(|n| EntityRecord {
                name: n.to_string(),
                entity_type: "resource".into(),
                description: String::new(),
                related_subgoals: vec![],
            })
            .collect(),
    })
    .unwrap()
}

/// Token-based oracle: split on non-word characters, then greedily join the
/// longest run of tokens (joined by `_` or space) that names a KB entry.
fn scan_oracle(text: &str, names: &[&str]) -> BTreeSet<String> {
    let lower = text.to_lowercase();
    let tokens: Vec<&str> = lower
        .split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .filter(|t| !t.is_empty())
        .collect();
    let set: BTreeSet<&str> = names.iter().copied().collect();
    tokens
        .into_iter()
        .filter(|t| set.contains(t))
        .map(String::from)
        .collect()
}

#[test]
fn entity_name_scan_examples() {
    let kb = small_kb(&["tree", "zombie"]);
    let found = extract_entity_names("You see: tree, zombie. Inventory: wood 2", &kb);
    assert_eq!(
        found,
        ["tree", "zombie"].iter().map(|s| s.to_string()).collect()
    );
    assert_eq!(
        found,
        scan_oracle(
            "You see: tree, zombie. Inventory: wood 2",
            &["tree", "zombie"]
        )
    );
    assert!(extract_entity_names("", &kb).is_empty());

    let kb = small_kb(&["stone", "stone_pickaxe"]);
    let text = "Inventory: stone x3, stone_pickaxe x1";
    let found = extract_entity_names(text, &kb);
    assert_eq!(found.len(), 2);
    assert_eq!(found, scan_oracle(text, &["stone", "stone_pickaxe"]));
    // longest match consumes its span
    assert_eq!(
        extract_entity_names("STONE_PICKAXE", &kb),
        ["stone_pickaxe".to_string()].into()
    );
}

proptest! {
    #[test]
    fn entity_scan_matches_token_oracle(words in prop::collection::vec(
        prop::sample::select(vec!["tree", "zombie", "stone", "stone_pickaxe", "wood", "none", "x2", "Stone"]), 0..12),
        seps in prop::collection::vec(prop::sample::select(vec![", ", " ", ": ", ".\n"]), 12)) {
        let names = ["tree", "zombie", "stone", "stone_pickaxe"];
        let kb = small_kb(&names);
        let text: String = words.iter().zip(seps.iter()).map(|(w, s)| format!("{w}{s}")).collect();
        prop_assert_eq!(extract_entity_names(&text, &kb), scan_oracle(&text, &names));
    }

    #[test]
    fn random_dags_round_trip_and_validate(seed in any::<u64>()) {
        let g = random_dag(seed, 30);
        prop_assert!(g.validate().is_clean());
        prop_assert!(!dfs_has_cycle(&g));
        let text = verbalize(&g, false).unwrap();
        prop_assert_eq!(&text, &verbalize(&g.clone(), false).unwrap());
        let parsed = parse_verbalized(&text).unwrap();
        prop_assert_eq!(structure(&parsed), structure(&g));
        // weights do not disturb parsing
        let parsed = parse_verbalized(&verbalize(&g, true).unwrap()).unwrap();
        prop_assert_eq!(structure(&parsed), structure(&g));
    }

    #[test]
    fn retrieval_returns_only_known_records(seed in any::<u64>(), picks in prop::collection::vec(0usize..40, 0..6)) {
        let g = random_dag(seed, 30);
        let ids: Vec<String> = g.ids().map(ToString::to_string).collect();
        let requested: BTreeSet<&str> = picks.iter().filter_map(|&i| ids.get(i).map(String::as_str)).collect();
        let d = subgoal_details(&g, requested.iter().copied(), 0).unwrap();
        prop_assert_eq!(d.len(), requested.len());
        for hops in 1..3 {
            let d = subgoal_details(&g, requested.iter().copied(), hops).unwrap();
            prop_assert!(d.iter().all(|r| g.contains(r.id.as_str()) && r.distance <= hops));
        }
    }
}

fn mock_gateway(responses: Vec<String>) -> Gateway {
    let script = MockScript {
        rules: vec![MockRule::for_role(Role::Extractor, responses)],
    };
    Gateway::new(Box::new(MockBackend::new(script).unwrap()))
}

#[test]
fn extraction_with_fixture_echo_reproduces_fixtures() {
    let graph_text = std::fs::read_to_string(fixture("crafter_graph.json")).unwrap();
    let kb_text = std::fs::read_to_string(fixture("crafter_kb.json")).unwrap();
    let mut gw = mock_gateway(vec![graph_text.clone(), kb_text.clone()]);
    let out = tempfile::tempdir().unwrap();
    let outcome =
        extract_knowledge(&["Crafter is a survival game.".into()], &mut gw, out.path()).unwrap();
    assert!(outcome.is_clean(), "{outcome:?}");
    assert_eq!(
        std::fs::read_to_string(&outcome.graph_draft).unwrap(),
        graph_text
    );
    assert_eq!(std::fs::read_to_string(&outcome.kb_draft).unwrap(), kb_text);
    assert_eq!(gw.calls(), 2);
    // second pass is conditioned on the first pass output
    assert!(gw.transcript()[1]
        .user_prompt
        .contains("\"make_wood_pickaxe\""));
}

#[test]
fn extraction_requires_documents() {
    let mut gw = mock_gateway(vec!["{}".into()]);
    let out = tempfile::tempdir().unwrap();
    assert!(matches!(
        extract_knowledge(&[], &mut gw, out.path()),
        Err(KnowledgeError::NoDocuments)
    ));
    assert_eq!(gw.calls(), 0);
}

#[test]
fn extraction_of_cyclic_graph_writes_draft_with_findings() {
    let doc = GraphDocument {
        subgoals: vec![
            node("a", &["b"], Some((DependencyKind::And, &["b"]))),
            node("b", &["a"], Some((DependencyKind::And, &["a"]))),
        ],
    };
    let cyclic = doc.to_canonical_json();
    let mut gw = mock_gateway(vec![cyclic.clone(), "{\"entities\": []}".into()]);
    let out = tempfile::tempdir().unwrap();
    let outcome = extract_knowledge(&["doc".into()], &mut gw, out.path()).unwrap();
    assert_eq!(
        std::fs::read_to_string(&outcome.graph_draft).unwrap(),
        cyclic
    );
    let g = SubgoalGraph::from_document(&doc).unwrap();
    assert!(dfs_has_cycle(&g));
    assert!(outcome
        .graph_findings
        .iter()
        .any(|f| f.contains("cycle through a, b")));
    let findings = std::fs::read_to_string(out.path().join("graph_draft.findings.txt")).unwrap();
    assert!(findings.contains("cycle"));
}

#[test]
fn extraction_with_unparseable_output_keeps_raw_draft() {
    let mut gw = mock_gateway(vec!["I cannot do that".into()]);
    let out = tempfile::tempdir().unwrap();
    let err = extract_knowledge(&["doc".into()], &mut gw, out.path()).unwrap_err();
    assert!(matches!(err, KnowledgeError::DraftSchema { .. }));
    assert_eq!(
        std::fs::read_to_string(out.path().join("graph_draft.json")).unwrap(),
        "I cannot do that"
    );
}
