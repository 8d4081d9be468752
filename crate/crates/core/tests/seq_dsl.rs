// SPDX-License-Identifier: Apache-2.0

mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use serde_json::{json, Value};
use tbforge_core::blueprint::Blueprint;
use tbforge_core::seq_dsl::{
    apply_safety_filters, auto_fix, codegen, codegen_package, screen, validate, Constraint,
    DslConfig, DslError, DslSequence, DslStep, FilterEvent, FixRule, Relation, SweepField,
    TogglePattern, STEP_TYPES,
};
use tbforge_core::strategy::infer_all;
use tbforge_core::templates::{check_text, ComponentKind};

fn doc(steps: Value) -> String {
    json!({"sequences": [{"name": "t", "description": "", "steps": steps}]}).to_string()
}

fn gen(seq: &DslSequence, bp: &Blueprint) -> String {
    let text = codegen(seq, bp, &infer_all(bp)).unwrap();
    let report = check_text(ComponentKind::SequencePkg, &text, bp);
    assert!(report.passed(), "{:?}\n{text}", report.violations);
    text
}

fn one(bp: &Blueprint, steps: Value) -> DslSequence {
    let mut seqs = validate(&doc(steps), bp).unwrap_or_else(|e| panic!("{e:?}"));
    seqs.remove(0)
}

fn transactions(text: &str) -> usize {
    text.matches("start_item(req);").count()
}

fn mdio_read() -> String {
    json!({"sequences": [{
        "name": "mdio_read_status",
        "description": "MII management read of the PHY status register",
        "steps": [
            {"type": "register_write", "addr": 0x2C, "value": 0x2},
            {"type": "poll", "addr": 0x3C, "mask": 0x2, "expected": 0,
             "max_iters": 128, "interval_cycles": 4}
        ]
    }]})
    .to_string()
}

#[test]
fn mdio_read_document_validates() {
    let bp = common::blueprint("wb_eth");
    let seqs = validate(&mdio_read(), &bp).unwrap();
    assert_eq!(seqs.len(), 1);
    assert_eq!(seqs[0].steps.len(), 2);
    assert_eq!(seqs[0].steps[0].type_name(), "register_write");
    assert_eq!(seqs[0].steps[1].type_name(), "poll");
}

#[test]
fn mdio_read_codegen_writes_then_polls() {
    let bp = common::blueprint("wb_eth");
    let seqs = validate(&mdio_read(), &bp).unwrap();
    let text = gen(&seqs[0], &bp);
    let write = text.find("req.wb_we_i = 1'b1;").unwrap();
    let start = text.find("start_item(req);").unwrap();
    let finish = text.find("finish_item(req);").unwrap();
    let loop_start = text.find("do begin").unwrap();
    assert!(start < write && write < finish && finish < loop_start);
    assert!(text.contains("req.wb_adr_i = 12'h02C;"));
    assert!(text.contains("req.wb_dat_i = 32'h00000002;"));
    assert!(text.contains("req.wb_adr_i = 12'h03C;"));
    assert!(text.contains(
        "end while ((dsl_rdata & 32'h00000002) != 32'h00000000 && dsl_iters < 128);"
    ));
    common::assert_golden("dsl_mdio_read.sv", &text);
}

#[test]
fn tx_buffer_then_status_bit_three() {
    let bp = common::blueprint("wb_eth");
    let seq = one(
        &bp,
        json!([
            {"type": "register_write", "addr": 0x400, "value": 0xD800},
            {"type": "poll", "addr": 0x004, "mask": 8, "expected": 8, "max_iters": 64, "interval_cycles": 1}
        ]),
    );
    let text = gen(&seq, &bp);
    assert_eq!(transactions(&text), 2);
    assert!(text.contains("(dsl_rdata & 32'h00000008) != 32'h00000008 && dsl_iters < 64"));
}

#[test]
fn only_the_ten_step_types_exist() {
    let bp = common::blueprint("wb_eth");
    let names: BTreeSet<&str> = STEP_TYPES.into_iter().collect();
    assert_eq!(names.len(), 10);
    for bogus in ["regwrite", "burst_write", "assert_equal", "sv_block"] {
        let err = validate(&doc(json!([{"type": bogus}])), &bp).unwrap_err();
        assert!(
            matches!(&err[0], DslError::UnknownStepType { name, .. } if name == bogus),
            "{bogus}: {err:?}"
        );
    }
}

#[test]
fn control_flow_hits_the_expressiveness_ceiling() {
    let bp = common::blueprint("wb_eth");
    let err = validate(&doc(json!([{"type": "if", "cond": "x"}])), &bp).unwrap_err();
    assert!(matches!(err[0], DslError::Expressiveness { .. }));
}

#[test]
fn unbounded_poll_is_rejected_then_repaired() {
    let bp = common::blueprint("wb_eth");
    let text = doc(json!([{"type": "poll", "addr": 0x3C, "mask": 2, "expected": 0, "interval_cycles": 1}]));
    let err = validate(&text, &bp).unwrap_err();
    assert!(matches!(err[0], DslError::UnboundedPoll { .. }));
    let (fixed, log) = auto_fix(&text, &bp);
    assert_eq!(log.count(FixRule::PollDefaultBound), 1);
    let seqs = validate(&fixed, &bp).unwrap();
    assert!(matches!(seqs[0].steps[0], DslStep::Poll { max_iters: 1024, .. }));
}

#[test]
fn typo_step_type_is_repaired() {
    let bp = common::blueprint("wb_spi");
    let text = doc(json!([{"type": "regwrite", "addr": 0x18, "value": 1}]));
    assert!(validate(&text, &bp).is_err());
    let (fixed, log) = auto_fix(&text, &bp);
    assert_eq!(log.count(FixRule::StepAlias), 1);
    assert!(validate(&fixed, &bp).is_ok());
}

#[test]
fn hex_string_on_eight_bit_register() {
    let bp = common::blueprint("wb_spi");
    let text = doc(json!([{"type": "register_write", "addr": 24, "value": "0xFF"}]));
    let (fixed, log) = auto_fix(&text, &bp);
    assert_eq!(log.len(), 1);
    assert_eq!(log.entries[0].rule, FixRule::NumericString);
    let seqs = validate(&fixed, &bp).unwrap();
    assert_eq!(seqs[0].steps[0], DslStep::RegisterWrite { addr: 0x18, value: 255 });

    // decimal strings and register names are accepted too
    let text = doc(json!([{"type": "register_write", "addr": "ss", "value": "26"}]));
    let (fixed, log) = auto_fix(&text, &bp);
    assert_eq!(log.count(FixRule::RegisterName), 1);
    assert_eq!(log.count(FixRule::NumericString), 1);
    assert_eq!(
        validate(&fixed, &bp).unwrap()[0].steps[0],
        DslStep::RegisterWrite { addr: 0x18, value: 26 }
    );
}

#[test]
fn out_of_width_values_are_masked() {
    let bp = common::blueprint("wb_spi");
    let text = doc(json!([{"type": "register_write", "addr": 24, "value": 0x1FF}]));
    assert!(matches!(validate(&text, &bp).unwrap_err()[0], DslError::ValueOverflow { .. }));
    let (fixed, log) = auto_fix(&text, &bp);
    assert_eq!(log.count(FixRule::ValueMasked), 1);
    assert_eq!(
        validate(&fixed, &bp).unwrap()[0].steps[0],
        DslStep::RegisterWrite { addr: 0x18, value: 0xFF }
    );
}

#[test]
fn canonical_document_is_a_fixpoint() {
    let bp = common::blueprint("wb_eth");
    let text = mdio_read();
    let (fixed, log) = auto_fix(&text, &bp);
    assert!(log.is_empty());
    assert_eq!(fixed, text);
}

#[test]
fn unknown_keys_are_dropped_but_code_is_refused() {
    let bp = common::blueprint("wb_spi");
    let text = doc(json!([{"type": "delay", "cycles": 4, "note": "settle"}]));
    assert!(matches!(validate(&text, &bp).unwrap_err()[0], DslError::UnknownKey { .. }));
    let (fixed, log) = auto_fix(&text, &bp);
    assert_eq!(log.count(FixRule::UnknownKeyDropped), 1);
    assert!(validate(&fixed, &bp).is_ok());

    let text = doc(json!([{"type": "delay", "cycles": 4,
        "sv_code": "vif.wb_stb_i = 1; wait (vif.wb_ack_o);"}]));
    let (fixed, _) = auto_fix(&text, &bp);
    let err = validate(&fixed, &bp).unwrap_err();
    assert!(matches!(err[0], DslError::CodePayload { .. }), "{err:?}");
    let text = doc(json!([{"type": "delay", "cycles": 4,
        "extra": "begin\n  start_item(req);\nend"}]));
    let (fixed, _) = auto_fix(&text, &bp);
    assert!(matches!(validate(&fixed, &bp).unwrap_err()[0], DslError::CodePayload { .. }));
}

#[test]
fn unknown_names_are_reported() {
    let bp = common::blueprint("wb_eth");
    let cases = [
        (json!([{"type": "register_write", "addr": 0x999, "value": 0}]), "register"),
        (json!([{"type": "value_sweep", "field": "nonexistent", "values": [1]}]), "field"),
        (json!([{"type": "bfm_action", "bfm": "phy9", "action": "link_up"}]), "bfm"),
        (json!([{"type": "bfm_action", "bfm": "phy0", "action": "explode"}]), "action"),
    ];
    for (steps, kind) in cases {
        let err = validate(&doc(steps), &bp).unwrap_err();
        let ok = match kind {
            "register" => matches!(err[0], DslError::UnknownRegister { .. }),
            "field" => matches!(err[0], DslError::UnknownField { .. }),
            "bfm" => matches!(err[0], DslError::UnknownBfm { .. }),
            _ => matches!(err[0], DslError::UnknownAction { .. }),
        };
        assert!(ok, "{kind}: {err:?}");
    }
}

#[test]
fn duplicate_names_are_rejected() {
    let bp = common::blueprint("wb_eth");
    let step = json!({"type": "delay", "cycles": 1});
    let text = json!({"sequences": [
        {"name": "a", "steps": [step]}, {"name": "a", "steps": [step]}
    ]})
    .to_string();
    assert_eq!(validate(&text, &bp).unwrap_err(), vec![DslError::DuplicateName("a".into())]);
}

#[test]
fn screening_keeps_good_steps_and_renames() {
    let bp = common::blueprint("wb_eth");
    let text = json!([
        {"name": "mdio", "steps": [
            {"type": "reg_write", "addr": "0x2C", "value": 2},
            {"type": "value_sweep", "field": "nonexistent", "values": [1]}
        ]},
        {"name": "dead", "steps": [{"type": "while", "cond": 1}]}
    ])
    .to_string();
    let existing: BTreeSet<String> = ["mdio".to_string()].into();
    let out = screen(&text, &bp, &DslConfig::default(), &existing, "iter2");
    assert_eq!(out.sequences.len(), 1);
    assert_eq!(out.sequences[0].name, "mdio_iter2");
    assert_eq!(out.sequences[0].steps.len(), 1);
    assert_eq!(out.renamed, vec![("mdio".into(), "mdio_iter2".into())]);
    assert_eq!(out.errors.len(), 3, "{:?}", out.errors);
    assert!(!out.fix_log.is_empty());
}

#[test]
fn from_dut_constraint_is_dropped() {
    let bp = common::blueprint("axi_timer");
    let seq = DslSequence::new(
        "s",
        "",
        vec![DslStep::RandomizeSend {
            constraints: vec![Constraint::eq("irq_pending", 1), Constraint::eq("enable", 1)],
        }],
    );
    let (filtered, log) = apply_safety_filters(&seq, &bp);
    assert_eq!(
        filtered.steps,
        vec![DslStep::RandomizeSend {
            constraints: vec![Constraint::eq("enable", 1)]
        }]
    );
    assert_eq!(log.dropped(), 1);
    assert!(matches!(&log.events[0], FilterEvent::ConstraintDropped { field, .. } if field == "irq_pending"));
}

#[test]
fn fixed_field_constraint_is_dropped() {
    let bp = common::blueprint("axi_timer");
    let seq = DslSequence::new(
        "s",
        "",
        vec![DslStep::RandomizeSend {
            constraints: vec![Constraint::eq("mode", 2)],
        }],
    );
    let (filtered, log) = apply_safety_filters(&seq, &bp);
    assert_eq!(filtered.steps, vec![DslStep::RandomizeSend { constraints: vec![] }]);
    assert_eq!(log.dropped(), 1);
}

#[test]
fn nonexistent_and_handshake_signals_reject_the_step() {
    let bp = common::blueprint("wb_spi");
    let seq = DslSequence::new(
        "s",
        "",
        vec![
            DslStep::ValueSweep {
                field: "nonexistent".into(),
                values: vec![1],
            },
            DslStep::ValueSweep {
                field: "wb_stb_i".into(),
                values: vec![1],
            },
            DslStep::RandomizeSend {
                constraints: vec![Constraint::eq("wb_cyc_i", 1)],
            },
            DslStep::Delay { cycles: 3 },
        ],
    );
    let (filtered, log) = apply_safety_filters(&seq, &bp);
    assert_eq!(filtered.steps, vec![DslStep::Delay { cycles: 3 }]);
    assert_eq!(log.rejected(), vec![0, 1, 2]);
}

#[test]
fn valid_sequence_passes_filters_unchanged() {
    let bp = common::blueprint("wb_spi");
    let seq = one(
        &bp,
        json!([
            {"type": "randomize_send", "constraints": [{"field": "wb_we_i", "op": "eq", "value": 1}]},
            {"type": "value_sweep", "field": "ss", "values": [1, 2]}
        ]),
    );
    let (filtered, log) = apply_safety_filters(&seq, &bp);
    assert_eq!(filtered, seq);
    assert!(log.is_empty());
}

#[test]
fn walking_one_on_four_bits() {
    let bp = common::blueprint("crc_unit");
    let seq = one(&bp, json!([{"type": "toggle_pattern", "field": "data", "pattern": "walking_one"}]));
    let text = gen(&seq, &bp);
    assert_eq!(transactions(&text), 4);
    let values: Vec<&str> = text
        .lines()
        .map(str::trim)
        .filter(|l| l.starts_with("req.data = "))
        .collect();
    assert_eq!(
        values,
        ["req.data = 4'h1;", "req.data = 4'h2;", "req.data = 4'h4;", "req.data = 4'h8;"]
    );
}

#[test]
fn config_sweep_is_row_major() {
    let bp = common::blueprint("divider");
    let seq = one(
        &bp,
        json!([{"type": "config_sweep", "fields": [
            {"field": "dividend", "values": [0, 1]},
            {"field": "divisor", "values": [2, 3]}
        ]}]),
    );
    let text = gen(&seq, &bp);
    assert_eq!(transactions(&text), 4);
    let pairs: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| l.starts_with("req.divi"))
        .map(|l| l.trim_end_matches(';').rsplit('h').next().unwrap().trim_start_matches('0').to_string())
        .collect();
    let pairs: Vec<String> = pairs.iter().map(|p| if p.is_empty() { "0".into() } else { p.clone() }).collect();
    assert_eq!(pairs, ["0", "2", "0", "3", "1", "2", "1", "3"]);
}

#[test]
fn config_sweep_over_register_fields_composes_one_write() {
    let bp = common::blueprint("wb_sdram_ctrl");
    let seq = one(
        &bp,
        json!([{"type": "config_sweep", "fields": [
            {"field": "cas_latency", "values": [2, 3]},
            {"field": "trcd", "values": [1]}
        ]}]),
    );
    let text = gen(&seq, &bp);
    assert_eq!(transactions(&text), 2);
    assert_eq!(text.matches("req.wb_we = 1'b1;").count(), 2);
}

#[test]
fn config_sweep_shorthand_object_is_normalized() {
    let bp = common::blueprint("divider");
    let text = doc(json!([{"type": "config_sweep", "fields": {"dividend": [0, 1], "divisor": [2, 3]}}]));
    let (fixed, log) = auto_fix(&text, &bp);
    assert!(!log.is_empty());
    let seqs = validate(&fixed, &bp).unwrap();
    assert_eq!(
        seqs[0].steps[0],
        DslStep::ConfigSweep {
            fields: vec![
                SweepField { field: "dividend".into(), values: vec![0, 1] },
                SweepField { field: "divisor".into(), values: vec![2, 3] },
            ]
        }
    );
}

#[test]
fn config_sweep_across_registers_is_refused() {
    let bp = common::blueprint("wb_spi");
    let err = validate(
        &doc(json!([{"type": "config_sweep", "fields": [
            {"field": "ss", "values": [1]}, {"field": "divider", "values": [2]}
        ]}])),
        &bp,
    )
    .unwrap_err();
    assert!(matches!(err[0], DslError::InvalidValue { .. }));
}

#[test]
fn every_step_type_has_a_golden() {
    let eth = common::blueprint("wb_eth");
    let crc = common::blueprint("crc_unit");
    let cases: [(&str, &Blueprint, Value); 10] = [
        ("register_write", &eth, json!({"type": "register_write", "addr": 0x2C, "value": 2})),
        ("register_read", &eth, json!({"type": "register_read", "addr": 0x38, "store_as": "phy_status"})),
        ("poll", &eth, json!({"type": "poll", "addr": 0x3C, "mask": 2, "expected": 0, "max_iters": 16, "interval_cycles": 2})),
        ("randomize_send", &eth, json!({"type": "randomize_send", "constraints": [
            {"field": "wb_we_i", "op": "eq", "value": 1},
            {"field": "wb_adr_i", "op": "in_set", "values": [0, 0x20]},
            {"field": "wb_dat_i", "op": "in_range", "lo": 1, "hi": 0x7F}
        ]})),
        ("delay", &eth, json!({"type": "delay", "cycles": 10})),
        ("memory_write", &eth, json!({"type": "memory_write", "bfm": "host_mem", "base_addr": 0x100, "data": [0xDEADBEEFu32, 1, 2]})),
        ("bfm_action", &eth, json!({"type": "bfm_action", "bfm": "phy0", "action": "send_frame", "params": {"len": 64}})),
        ("config_sweep", &eth, json!({"type": "config_sweep", "fields": [
            {"field": "txen", "values": [0, 1]}, {"field": "rxen", "values": [0, 1]}
        ]})),
        ("value_sweep", &crc, json!({"type": "value_sweep", "field": "data", "values": [0, 7, 15]})),
        ("toggle_pattern", &eth, json!({"type": "toggle_pattern", "field": "tx_bd_num", "pattern": "alternating"})),
    ];
    let mut seen = BTreeSet::new();
    for (name, bp, step) in cases {
        let seq = one(bp, json!([step]));
        assert_eq!(seq.steps[0].type_name(), name);
        seen.insert(name);
        common::assert_golden(&format!("dsl_{name}.sv"), &gen(&seq, bp));
    }
    assert_eq!(seen.len(), 10);
}

#[test]
fn package_runs_every_sequence_in_order() {
    let bp = common::blueprint("wb_eth");
    let mut seqs = validate(&mdio_read(), &bp).unwrap();
    seqs.push(one(&bp, json!([{"type": "delay", "cycles": 1}])));
    let text = codegen_package(&seqs, &bp, &infer_all(&bp), 2).unwrap();
    assert!(text.contains("class wb_eth_vseq_iter2 extends wb_eth_base_seq;"));
    let a = text.find("s0.start(m_sequencer, this);").unwrap();
    let b = text.find("s1.start(m_sequencer, this);").unwrap();
    assert!(a < b);
    assert!(check_text(ComponentKind::SequencePkg, &text, &bp).passed());
}

#[test]
fn memory_write_needs_a_backdoor() {
    let bp = common::blueprint("wb_eth");
    let err = validate(
        &doc(json!([{"type": "memory_write", "bfm": "phy0", "base_addr": 0, "data": [1]}])),
        &bp,
    )
    .unwrap_err();
    assert!(matches!(err[0], DslError::InvalidValue { .. }));
}

#[test]
fn register_steps_need_a_bus() {
    let bp = common::blueprint("crc_unit");
    assert!(validate(&doc(json!([{"type": "register_write", "addr": 0, "value": 0}])), &bp).is_err());
}

// --- properties ----------------------------------------------------------

/// Transactions a step must expand to, computed from the step alone.
fn expected_transactions(step: &DslStep, bp: &Blueprint) -> usize {
    match step {
        DslStep::RegisterWrite { .. } | DslStep::RegisterRead { .. } | DslStep::RandomizeSend { .. } => 1,
        DslStep::Poll { .. } => 1,
        DslStep::Delay { .. } | DslStep::MemoryWrite { .. } | DslStep::BfmAction { .. } => 0,
        DslStep::ValueSweep { values, .. } => values.len(),
        DslStep::ConfigSweep { fields } => fields.iter().map(|f| f.values.len()).product(),
        DslStep::TogglePattern { field, pattern } => {
            let w = bp.field(field).map(|f| f.width).unwrap_or_else(|| {
                bp.register_map
                    .iter()
                    .flat_map(|r| &r.fields)
                    .find(|f| &f.name == field)
                    .map(|f| f.width())
                    .unwrap()
            }) as usize;
            match pattern {
                TogglePattern::WalkingOne | TogglePattern::WalkingZero => w,
                TogglePattern::Alternating => 2,
            }
        }
    }
}

fn eth_step() -> impl Strategy<Value = DslStep> {
    let regs = prop::sample::select(vec![0x000u64, 0x008, 0x00C, 0x020, 0x02C, 0x400]);
    let fields = prop::sample::select(vec!["txen", "rxen", "tx_bd_num", "ipgt"]);
    prop_oneof![
        (regs.clone(), any::<u32>()).prop_map(|(addr, v)| DslStep::RegisterWrite { addr, value: u64::from(v) }),
        regs.clone().prop_map(|addr| DslStep::RegisterRead { addr, store_as: "v".into() }),
        (regs, 1u32..64, 1u32..8).prop_map(|(addr, max_iters, interval_cycles)| DslStep::Poll {
            addr,
            mask: 1,
            expected: 1,
            max_iters,
            interval_cycles
        }),
        (0u64..4).prop_map(|v| DslStep::RandomizeSend {
            constraints: vec![Constraint {
                field: "wb_dat_i".into(),
                relation: Relation::InRange { lo: 0, hi: v }
            }]
        }),
        (1u32..100).prop_map(|cycles| DslStep::Delay { cycles }),
        prop::collection::vec(any::<u32>(), 1..4).prop_map(|d| DslStep::MemoryWrite {
            bfm: "host_mem".into(),
            base_addr: 0,
            data: d.into_iter().map(u64::from).collect()
        }),
        Just(DslStep::BfmAction {
            bfm: "phy0".into(),
            action: "link_up".into(),
            params: Default::default()
        }),
        (prop::collection::vec(0u64..2, 1..3), prop::collection::vec(0u64..2, 1..3)).prop_map(|(a, b)| {
            DslStep::ConfigSweep {
                fields: vec![
                    SweepField { field: "txen".into(), values: a },
                    SweepField { field: "rxen".into(), values: b },
                ],
            }
        }),
        (fields.clone(), prop::collection::vec(0u64..2, 1..5))
            .prop_map(|(f, values)| DslStep::ValueSweep { field: f.into(), values }),
        (fields, prop::sample::select(TogglePattern::ALL.to_vec()))
            .prop_map(|(f, pattern)| DslStep::TogglePattern { field: f.into(), pattern }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn step_count_is_conserved(steps in prop::collection::vec(eth_step(), 1..6)) {
        let bp = common::blueprint("wb_eth");
        let seq = DslSequence::new("p", "", steps);
        let (filtered, log) = apply_safety_filters(&seq, &bp);
        prop_assert!(log.is_empty(), "{:?}", log);
        let text = gen(&filtered, &bp);
        let expected: usize = filtered.steps.iter().map(|s| expected_transactions(s, &bp)).sum();
        prop_assert_eq!(transactions(&text), expected);
        // every loop is bounded
        for line in text.lines().filter(|l| l.contains("while")) {
            prop_assert!(line.contains("dsl_iters <"));
        }
    }

    #[test]
    fn generated_documents_round_trip(steps in prop::collection::vec(eth_step(), 1..6)) {
        let bp = common::blueprint("wb_eth");
        let seq = DslSequence::new("p", "", steps);
        let text = tbforge_core::seq_dsl::DslDocument { sequences: vec![seq.clone()] }.to_json();
        let back = validate(&text, &bp).unwrap();
        prop_assert_eq!(&back[0], &seq);
        let (fixed, log) = auto_fix(&text, &bp);
        prop_assert!(log.is_empty());
        prop_assert_eq!(fixed, text);
    }

    #[test]
    fn auto_fix_is_idempotent(
        steps in prop::collection::vec(eth_step(), 1..5),
        mutations in prop::collection::vec((0usize..8, any::<prop::sample::Index>()), 0..8),
    ) {
        let bp = common::blueprint("wb_eth");
        let seq = DslSequence::new("p", "", steps);
        let mut v: Value = serde_json::to_value(tbforge_core::seq_dsl::DslDocument { sequences: vec![seq] }).unwrap();
        {
            let steps = v["sequences"][0]["steps"].as_array_mut().unwrap();
            for (kind, idx) in mutations {
                let s = idx.get_mut(steps).as_object_mut().unwrap();
                match kind {
                    0 => { if let Some(a) = s.get("addr").and_then(Value::as_u64) { s.insert("addr".into(), json!(format!("0x{a:X}"))); } }
                    1 => { s.insert("comment".into(), json!("why not")); }
                    2 => { s.remove("max_iters"); s.remove("interval_cycles"); }
                    3 => { if s["type"] == "register_write" { s.insert("type".into(), json!("reg_write")); } }
                    4 => { if let Some(x) = s.get("value").and_then(Value::as_u64) { s.insert("value".into(), json!(x | 1 << 40)); } }
                    5 => { if let Some(x) = s.remove("addr") { s.insert("address".into(), x); } }
                    6 => { if let Some(x) = s.get("cycles").and_then(Value::as_u64) { s.insert("cycles".into(), json!(x.to_string())); } }
                    _ => { s.insert("type".into(), json!(format!("{}", s["type"].as_str().unwrap().replace('_', "-").to_uppercase()))); }
                }
            }
        }
        let text = v.to_string();
        let (once, _) = auto_fix(&text, &bp);
        let (twice, log) = auto_fix(&once, &bp);
        prop_assert!(log.is_empty(), "{:?}", log);
        prop_assert_eq!(&twice, &once);
        prop_assert!(validate(&once, &bp).is_ok(), "{}", once);
    }

    #[test]
    fn filters_are_sound(fields in prop::collection::vec(prop::sample::select(vec![
        "txen", "int_source", "ipgt", "fulld", "wb_dat_o", "wb_we_i", "wb_cyc_i", "nope"
    ]), 1..5)) {
        let bp = common::blueprint("wb_eth");
        let strategies = infer_all(&bp);
        let seq = DslSequence::new("p", "", vec![DslStep::RandomizeSend {
            constraints: fields.iter().map(|f| Constraint::eq(f, 0)).collect(),
        }]);
        let (filtered, _) = apply_safety_filters(&seq, &bp);
        for step in &filtered.steps {
            if let DslStep::RandomizeSend { constraints } = step {
                for c in constraints {
                    let f = bp.field(&c.field);
                    let to_dut = f.is_none_or(|f| f.direction == tbforge_core::blueprint::FieldDirection::ToDut);
                    prop_assert!(to_dut, "constraint on output field {}", c.field);
                    let fixed = matches!(strategies.get(&c.field), Some(tbforge_core::strategy::StimulusStrategy::Fixed { .. }));
                    prop_assert!(!fixed, "constraint on fixed field {}", c.field);
                }
            }
        }
        let rejected = fields.iter().any(|f| *f == "wb_cyc_i" || *f == "nope");
        prop_assert_eq!(filtered.steps.is_empty(), rejected);
        if !rejected {
            let text = tbforge_core::seq_dsl::DslDocument { sequences: vec![filtered.clone()] }.to_json();
            prop_assert!(validate(&text, &bp).is_ok());
            gen(&filtered, &bp);
        }
    }
}
