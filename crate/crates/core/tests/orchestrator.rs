// SPDX-License-Identifier: Apache-2.0

mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use tbforge_core::coverage::{serialize_report, CoverageGap, CoverageSummary, GapKind, Metric};
use tbforge_core::llm::{LlmClient, LlmPurpose, ScriptedLlm};
use tbforge_core::orchestrator::{
    compile_fix_loop, run, run_stage1, run_stage2, run_stage2_step, OrchestratorError, PipelineState, RunConfig,
    StepOutcome, StopReason,
};
use tbforge_core::sim::{CompileModel, CompileRule, DutProfile, MockSim, ScheduledSim};

fn run_dir() -> PathBuf {
    common::fixtures_dir().join("runs/wb_gpio")
}

fn spec() -> String {
    std::fs::read_to_string(run_dir().join("spec.md")).unwrap()
}

fn profile() -> DutProfile {
    DutProfile::load(&run_dir().join("profile.json")).unwrap()
}

fn scripted() -> ScriptedLlm {
    ScriptedLlm::from_dir(&run_dir()).unwrap()
}

fn bp_only() -> ScriptedLlm {
    ScriptedLlm::new().with(LlmPurpose::ExtractBlueprint, common::blueprint_text("wb_gpio"))
}

/// A report where every metric sits at `pct` with one open gap.
fn report(pct: f64) -> String {
    let all: Vec<(Metric, f64)> = Metric::ALL.iter().map(|m| (*m, pct)).collect();
    let gap = CoverageGap::from(GapKind::LineMiss {
        file: "rtl/gpio.v".into(),
        line: 9,
    });
    serialize_report(&CoverageSummary::from_percentages(&all), &[gap])
}

fn dsl(i: usize) -> String {
    json!({"sequences": [{
        "name": format!("gap_seq_{i}"),
        "description": "targets one gap",
        "steps": [{"type": "register_write", "addr": "0x04", "value": i}]
    }]})
    .to_string()
}

fn dsl_llm(n: usize) -> ScriptedLlm {
    let mut llm = bp_only();
    for i in 1..=n {
        llm.push(LlmPurpose::GenerateDsl, dsl(i));
    }
    llm
}

fn protected_snapshot(state: &PipelineState) -> BTreeMap<String, String> {
    state
        .components
        .iter()
        .filter(|c| c.protected)
        .map(|c| (c.file_name.clone(), c.content.clone()))
        .collect()
}

fn events<'a>(state: &'a PipelineState, name: &str) -> Vec<&'a tbforge_core::orchestrator::RunEvent> {
    state.log.iter().filter(|e| e.event == name).collect()
}

#[test]
fn end_to_end_with_mock_backends() {
    let cfg = RunConfig::default();
    let mut llm = scripted();
    let mut sim = MockSim::new(profile());
    let state = run_stage1(&spec(), &cfg, &mut llm, &mut sim).unwrap();
    assert!(state.components.len() >= 6);
    assert!(state.sequences.len() >= 3);
    assert_eq!(state.history.len(), 1);
    assert!(state.protocol_flows.contains("Poll RGPIO_INTS"));
    // toggles from the predefined set close the first two items
    let first = tbforge_core::coverage::parse_report(&state.reports[0]).unwrap();
    assert_eq!(first.gaps.len(), 6);

    let state = run_stage2(state, &cfg, &mut llm, &mut sim).unwrap();
    assert_eq!(state.stop_reason, Some(StopReason::NoGaps));
    assert_eq!(state.iteration, 2);
    assert_eq!(state.history.len(), 3);
    assert_eq!(llm.ledger().count(LlmPurpose::GenerateDsl), 2);
    let last = tbforge_core::coverage::parse_report(state.reports.last().unwrap()).unwrap();
    assert!(last.gaps.is_empty());
    assert_eq!(last.summary.percent(Metric::Group).unwrap(), 100.0 * 21.0 / 25.0);
    // the second response reused a name and carried one bad step
    let names: Vec<&str> = state.sequences.iter().map(|s| s.name.as_str()).collect();
    assert!(names.contains(&"edge_irq_setup") && names.contains(&"edge_irq_setup_iter2"));
    let second = state.sequences.iter().find(|s| s.name == "edge_irq_setup_iter2").unwrap();
    assert_eq!(second.steps.len(), 3);
    assert!(state.component("sequence_pkg_iter2.sv").is_some());
    // the gap prompt lists accumulated sequences and the flows section
    let (_, p2) = llm.prompts.iter().filter(|(p, _)| *p == LlmPurpose::GenerateDsl).nth(1).unwrap();
    assert!(p2.contains("edge_irq_setup") && p2.contains("Enable an edge interrupt"));
}

#[test]
fn malformed_blueprint_twice_is_rejected() {
    let mut llm = ScriptedLlm::new()
        .with(LlmPurpose::ExtractBlueprint, "{ not json")
        .with(LlmPurpose::ExtractBlueprint, "[]");
    let err = run_stage1(&spec(), &RunConfig::default(), &mut llm, &mut MockSim::default()).unwrap_err();
    assert!(matches!(err, OrchestratorError::BlueprintRejected(_)), "{err}");
    assert_eq!(llm.ledger().count(LlmPurpose::ExtractBlueprint), 2);
}

#[test]
fn inconsistent_blueprint_is_retried_once_with_errors() {
    let mut bad: Value = serde_json::from_str(&common::blueprint_text("wb_gpio")).unwrap();
    bad["seq_item_fields"][0]["width"] = json!(16);
    let bad_bp = tbforge_core::blueprint::parse_blueprint(&bad.to_string()).unwrap();
    assert!(!tbforge_core::blueprint::consistency_check(&bad_bp).passed());

    let mut llm = ScriptedLlm::new()
        .with(LlmPurpose::ExtractBlueprint, bad.to_string())
        .with(LlmPurpose::ExtractBlueprint, common::blueprint_text("wb_gpio"));
    let state = run_stage1(&spec(), &RunConfig::default(), &mut llm, &mut MockSim::new(profile())).unwrap();
    assert_eq!(events(&state, "blueprint_rejected").len(), 1);
    assert_eq!(events(&state, "blueprint_accepted")[0].detail["attempt"], 2);
    let retry = &llm.prompts[1].1;
    assert!(retry.contains("previous Blueprint was rejected") && retry.contains("rgpio_out"));
}

#[test]
fn empty_spec_is_refused() {
    let err = run_stage1("  \n", &RunConfig::default(), &mut bp_only(), &mut MockSim::default()).unwrap_err();
    assert!(matches!(err, OrchestratorError::EmptySpec));
}

fn seq_item_rule() -> CompileModel {
    CompileModel {
        always_fail: false,
        rules: vec![CompileRule {
            file: "*_seq_item.sv".into(),
            must_contain: Some("// reviewed".into()),
            must_not_contain: None,
            error: "seq_item needs review marker".into(),
        }],
    }
}

fn fix_edit(file: &str, content: &str) -> String {
    json!({"edits": [{"file": file, "content": content}]}).to_string()
}

#[test]
fn compile_failure_fixed_in_one_iteration() {
    let item = "wb_gpio_seq_item.sv";
    let mut p = profile();
    p.compile = seq_item_rule();
    let mut sim = MockSim::new(p);
    // Stage 1 needs its own fix; reuse the rendered seq_item text
    let rendered = {
        let bp = common::blueprint("wb_gpio");
        let strat = tbforge_core::strategy::infer_all(&bp);
        tbforge_core::templates::render_all(&bp, &strat)
            .unwrap()
            .into_iter()
            .find(|c| c.file_name == item)
            .unwrap()
            .content
    };
    let mut llm = bp_only().with(LlmPurpose::ProposeFix, fix_edit(item, &format!("{rendered}// reviewed\n")));
    let state = run_stage1(&spec(), &RunConfig::default(), &mut llm, &mut sim).unwrap();
    assert_eq!(state.fix_iterations, 1);
    assert_eq!(sim.compiles, 2);
    let (_, fix_prompt) = llm.prompts.iter().find(|(p, _)| *p == LlmPurpose::ProposeFix).unwrap();
    assert!(fix_prompt.contains(item) && fix_prompt.contains("seq_item needs review marker"));
    assert!(!fix_prompt.contains("### wb_gpio_driver.sv"), "protected files are never offered");
}

#[test]
fn protected_edit_is_rejected_and_loop_continues() {
    let mut llm = bp_only();
    let mut state = run_stage1(&spec(), &RunConfig::default(), &mut llm, &mut MockSim::new(profile())).unwrap();
    let before = protected_snapshot(&state);
    let item = state.component("wb_gpio_seq_item.sv").unwrap().content.clone();

    let mut p = profile();
    p.compile = seq_item_rule();
    let mut sim = MockSim::new(p);
    llm.push(LlmPurpose::ProposeFix, fix_edit("wb_gpio_driver.sv", "module hijack; endmodule"));
    llm.push(
        LlmPurpose::ProposeFix,
        json!({"edits": [
            {"file": "wb_gpio_tb_top.sv", "content": "module x; endmodule"},
            {"file": "no_such_file.sv", "content": ""},
            {"file": "wb_gpio_seq_item.sv", "content": format!("{item}// reviewed\n")}
        ]})
        .to_string(),
    );
    let n = compile_fix_loop(&mut state, &RunConfig::default(), &mut llm, &mut sim).unwrap();
    assert_eq!(n, 2);
    assert_eq!(protected_snapshot(&state), before);
    let rejected: Vec<(String, String)> = events(&state, "edit_rejected")
        .iter()
        .map(|e| (e.detail["file"].as_str().unwrap().into(), e.detail["reason"].as_str().unwrap().into()))
        .collect();
    assert_eq!(
        rejected,
        [
            ("wb_gpio_driver.sv".to_string(), "protected".to_string()),
            ("wb_gpio_tb_top.sv".into(), "protected".into()),
            ("no_such_file.sv".into(), "unknown_file".into()),
        ]
    );
}

#[test]
fn always_failing_compiler_exhausts_after_five_fixes() {
    let mut llm = bp_only();
    for _ in 0..5 {
        llm.push(LlmPurpose::ProposeFix, "[]");
    }
    let mut p = profile();
    p.compile.always_fail = true;
    let mut sim = MockSim::new(p);
    let err = run_stage1(&spec(), &RunConfig::default(), &mut llm, &mut sim).unwrap_err();
    match err {
        OrchestratorError::CompileFixExhausted { iterations, log } => {
            assert_eq!(iterations, 5);
            assert!(log.contains("configured to fail"));
        }
        other => panic!("{other}"),
    }
    assert_eq!(sim.compiles, 6);
    assert_eq!(llm.ledger().count(LlmPurpose::ProposeFix), 5);
}

#[test]
fn llm_text_never_reaches_protected_files() {
    const TAINT: &str = "TAINT_7f3a";
    let mut llm = bp_only();
    let state = run_stage1(&spec(), &RunConfig::default(), &mut llm, &mut MockSim::new(profile())).unwrap();
    let before = protected_snapshot(&state);

    let mut p = profile();
    p.compile = seq_item_rule();
    let mut sim = MockSim::new(p);
    let doc = json!({"sequences": [{
        "name": "tainted", "description": TAINT,
        "steps": [{"type": "register_write", "addr": "0x10", "value": 1, "note": TAINT}]
    }]});
    llm.push(LlmPurpose::GenerateDsl, doc.to_string());
    let item = state.component("wb_gpio_seq_item.sv").unwrap().content.clone();
    let mut edits = vec![json!({"file": "wb_gpio_seq_item.sv", "content": format!("{item}// reviewed {TAINT}\n")})];
    for c in state.components.iter().filter(|c| c.protected) {
        edits.push(json!({"file": c.file_name, "content": TAINT}));
    }
    llm.push(LlmPurpose::ProposeFix, json!(edits).to_string());
    let cfg = RunConfig {
        k: 1,
        ..RunConfig::default()
    };
    let state = run_stage2(state, &cfg, &mut llm, &mut sim).unwrap();
    assert_eq!(protected_snapshot(&state), before);
    for c in state.components.iter().filter(|c| c.protected) {
        assert!(!c.content.contains(TAINT), "{}", c.file_name);
    }
    assert!(state.component("wb_gpio_seq_item.sv").unwrap().content.contains(TAINT));
    assert_eq!(events(&state, "edit_rejected").len(), before.len());
    for t in tbforge_core::templates::TemplateLibrary::builtin().names() {
        assert!(!t.contains(TAINT));
    }
}

#[test]
fn early_stop_below_threshold() {
    let mut llm = dsl_llm(3);
    let mut sim = ScheduledSim::new([report(90.0), report(90.05), report(95.0)]);
    let cfg = RunConfig::default();
    let state = run(&spec(), &cfg, &mut llm, &mut sim).unwrap();
    assert_eq!(state.stop_reason, Some(StopReason::Converged));
    assert_eq!(state.iteration, 1);
    assert_eq!(state.history.len(), 2);
}

#[test]
fn exact_threshold_delta_does_not_stop() {
    let mut llm = dsl_llm(3);
    let mut sim = ScheduledSim::new([report(90.0), report(90.1), report(90.1)]);
    let state = run(&spec(), &RunConfig::default(), &mut llm, &mut sim).unwrap();
    assert_eq!(state.iteration, 2);
    assert_eq!(state.stop_reason, Some(StopReason::Converged));
}

#[test]
fn k_caps_iterations() {
    let mut llm = dsl_llm(5);
    let mut sim = ScheduledSim::new([report(84.6), report(88.0), report(90.5), report(90.55), report(99.0)]);
    let state = run(&spec(), &RunConfig::default(), &mut llm, &mut sim).unwrap();
    assert_eq!(state.iteration, 3);
    assert_eq!(state.history.len(), 4);
    assert_eq!(sim.simulations, 4);

    let mut llm = dsl_llm(5);
    let mut sim = ScheduledSim::new([report(80.0), report(82.0), report(84.0), report(86.0), report(88.0)]);
    let state = run(&spec(), &RunConfig::default(), &mut llm, &mut sim).unwrap();
    assert_eq!(state.stop_reason, Some(StopReason::IterationLimit));
    assert_eq!(state.history.len(), 4);
    assert_eq!(llm.ledger().count(LlmPurpose::GenerateDsl), 3);

    let mut llm = dsl_llm(0);
    let mut sim = ScheduledSim::new([report(80.0)]);
    let cfg = RunConfig {
        k: 0,
        ..RunConfig::default()
    };
    let state = run(&spec(), &cfg, &mut llm, &mut sim).unwrap();
    assert_eq!(state.history.len(), 1);
    assert_eq!(llm.ledger().count(LlmPurpose::GenerateDsl), 0);
}

#[test]
fn sequences_only_accumulate() {
    let mut llm = dsl_llm(3);
    let mut sim = ScheduledSim::new([report(70.0), report(75.0), report(80.0), report(85.0)]);
    let cfg = RunConfig::default();
    let mut state = run_stage1(&spec(), &cfg, &mut llm, &mut sim).unwrap();
    let mut prev = state.sequences.clone();
    for _ in 0..3 {
        assert_eq!(run_stage2_step(&mut state, &cfg, &mut llm, &mut sim).unwrap(), StepOutcome::Continue);
        assert!(state.sequences.len() > prev.len());
        assert_eq!(state.sequences[..prev.len()], prev[..]);
        prev = state.sequences.clone();
    }
}

#[test]
fn rejected_response_consumes_the_iteration() {
    let mut llm = bp_only()
        .with(LlmPurpose::GenerateDsl, "not json at all")
        .with(LlmPurpose::GenerateDsl, json!({"sequences": [{"name": "x", "description": "",
            "steps": [{"type": "register_write", "addr": "0x999", "value": 1}]}]}).to_string())
        .with(LlmPurpose::GenerateDsl, dsl(1));
    let mut sim = ScheduledSim::new([report(70.0), report(75.0)]);
    let state = run(&spec(), &RunConfig::default(), &mut llm, &mut sim).unwrap();
    assert_eq!(events(&state, "dsl_rejected").len(), 2);
    assert_eq!(state.iteration, 3);
    assert_eq!(state.history.len(), 2);
    assert_eq!(sim.simulations, 2);
}

#[test]
fn zero_gaps_means_no_stage2_calls() {
    let clean = serialize_report(
        &CoverageSummary::from_percentages(&Metric::ALL.map(|m| (m, 100.0))),
        &[],
    );
    let mut llm = bp_only();
    let mut sim = ScheduledSim::new([clean]);
    let state = run(&spec(), &RunConfig::default(), &mut llm, &mut sim).unwrap();
    assert_eq!(state.stop_reason, Some(StopReason::NoGaps));
    assert_eq!(llm.ledger().totals().calls, 1);
}

fn read_tree(root: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for entry in glob::glob(&format!("{}/**/*", root.display())).unwrap() {
        let p = entry.unwrap();
        if p.is_file() {
            let rel = p.strip_prefix(root).unwrap().display().to_string();
            let mut text = std::fs::read_to_string(&p).unwrap();
            if rel == "run_log.jsonl" {
                text = text
                    .lines()
                    .map(|l| {
                        let mut v: Value = serde_json::from_str(l).unwrap();
                        v["ts"] = json!(0);
                        v.to_string() + "\n"
                    })
                    .collect();
            }
            out.insert(rel, text);
        }
    }
    out
}

#[test]
fn runs_are_reproducible() {
    let mut trees = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            out_dir: Some(dir.path().to_path_buf()),
            ..RunConfig::default()
        };
        run(&spec(), &cfg, &mut scripted(), &mut MockSim::new(profile())).unwrap();
        trees.push(read_tree(dir.path()));
    }
    let files: Vec<&str> = trees[0].keys().map(String::as_str).collect();
    for want in [
        "blueprint.json",
        "strategies.json",
        "predefined_seqs.json",
        "dsl_iter1.json",
        "sequence_pkg_iter0.sv",
        "sequence_pkg_iter2.sv",
        "coverage_iter0.txt",
        "coverage_iter2.txt",
        "run_log.jsonl",
        "token_ledger.json",
        "rendered/wb_gpio_driver.sv",
    ] {
        assert!(files.contains(&want), "missing {want} in {files:?}");
    }
    assert_eq!(trees[0], trees[1]);
}
