// SPDX-License-Identifier: Apache-2.0

mod common;

use common::triggers::*;
use common::{blueprint, blueprint_with, ALL_BLUEPRINTS};
use proptest::prelude::*;
use serde_json::json;
use tbforge_core::blueprint::Blueprint;
use tbforge_core::predefined::{detect_banks, infer_predefined, TriggerReport};
use tbforge_core::seq_dsl::{apply_safety_filters, codegen_package, validate, DslDocument, DslSequence, DslStep};
use tbforge_core::strategy::infer_all;
use tbforge_core::templates::{bfm_spec, check_text, ComponentKind};

fn run(bp: &Blueprint) -> (Vec<DslSequence>, TriggerReport) {
    infer_predefined(bp, &infer_all(bp))
}

fn names(seqs: &[DslSequence]) -> Vec<&str> {
    seqs.iter().map(|s| s.name.as_str()).collect()
}

fn find<'a>(seqs: &'a [DslSequence], name: &str) -> &'a DslSequence {
    seqs.iter()
        .find(|s| s.name == name)
        .unwrap_or_else(|| panic!("no sequence {name} in {:?}", names(seqs)))
}

fn check_triggers(bp: &Blueprint, report: &TriggerReport) {
    let expect = expected_triggers(bp);
    for ((kind, r), (k2, want)) in report.kinds().into_iter().zip(expect) {
        assert_eq!(kind, k2);
        assert_eq!(r.fired, want, "{}: {kind} fired={} evidence={:?}", bp.design_name, r.fired, r.evidence);
        if r.fired {
            assert!(!r.evidence.is_empty(), "{}: {kind} fired without evidence", bp.design_name);
        } else {
            assert!(r.sequences.is_empty(), "{}: {kind} emitted without firing", bp.design_name);
        }
    }
}

fn check_self_consistent(bp: &Blueprint, seqs: &[DslSequence], report: &TriggerReport) {
    for (kind, r) in report.kinds() {
        assert!(r.skipped.is_empty(), "{}: {kind} skipped {:?}", bp.design_name, r.skipped);
    }
    let text = DslDocument {
        sequences: seqs.to_vec(),
    }
    .to_json();
    let back = validate(&text, bp).unwrap_or_else(|e| panic!("{}: {e:?}", bp.design_name));
    assert_eq!(back, seqs);
    for s in seqs {
        let (filtered, log) = apply_safety_filters(s, bp);
        assert!(log.is_empty(), "{}: {log:?}", bp.design_name);
        assert_eq!(&filtered, s);
    }
}

#[test]
fn every_fixture_is_self_consistent() {
    for name in ALL_BLUEPRINTS {
        let bp = blueprint(name);
        let (seqs, report) = run(&bp);
        check_self_consistent(&bp, &seqs, &report);
        check_triggers(&bp, &report);
        let pkg = codegen_package(&seqs, &bp, &infer_all(&bp), 0).unwrap();
        let lint = check_text(ComponentKind::SequencePkg, &pkg, &bp);
        assert!(lint.passed(), "{name}: {:?}", lint.violations);
    }
}

#[test]
fn crv_always_three() {
    for name in ALL_BLUEPRINTS {
        let (seqs, report) = run(&blueprint(name));
        assert!(report.crv.fired);
        assert_eq!(report.crv.sequences, ["crv_random_writes", "crv_random_reads", "crv_mixed"], "{name}");
        for s in &report.crv.sequences {
            let seq = find(&seqs, s);
            assert!(seq.steps.iter().any(|st| matches!(st, DslStep::RandomizeSend { .. })));
        }
    }
}

#[test]
fn wide_direct_design_gets_crv_only() {
    // aes_core: 64-bit data, no registers, no BFMs
    let (seqs, report) = run(&blueprint("aes_core"));
    assert_eq!(names(&seqs), ["crv_random_writes", "crv_random_reads", "crv_mixed"]);
    for (kind, r) in report.kinds().into_iter().skip(1) {
        assert!(!r.fired, "{kind}");
    }
}

#[test]
fn three_bit_field_sweeps_eight_values() {
    let bp = blueprint_with("aes_core", |v| {
        v["seq_item_fields"].as_array_mut().unwrap().push(json!(
            {"name": "mode_sel", "width": 3, "direction": "to_dut", "role": "control"}
        ));
        v["ports"].as_array_mut().unwrap().push(json!({"name": "mode_sel", "width": 3, "dir": "in"}));
    });
    let (seqs, report) = run(&bp);
    assert!(report.enumerate.fired);
    assert_eq!(report.enumerate.evidence, ["field mode_sel"]);
    let seq = find(&seqs, "enum_mode_sel");
    let expect: Vec<u64> = (0..(1u64 << 3)).collect();
    assert_eq!(
        seq.steps,
        vec![DslStep::ValueSweep {
            field: "mode_sel".into(),
            values: expect
        }]
    );
}

#[test]
fn bus_crv_targets_register_addresses() {
    let bp = blueprint("wb_spi");
    let (seqs, _) = run(&bp);
    let json = serde_json::to_value(find(&seqs, "crv_random_reads")).unwrap();
    let c = &json["steps"][0]["constraints"];
    assert_eq!(c[0], json!({"field": "wb_we_i", "op": "eq", "value": 0}));
    // readable: rx_fifo_data, ctrl, divider, ss
    assert_eq!(c[1], json!({"field": "wb_adr_i", "op": "in_set", "values": [0x00, 0x10, 0x14, 0x18]}));
    let json = serde_json::to_value(find(&seqs, "crv_random_writes")).unwrap();
    assert_eq!(json["steps"][0]["constraints"][1]["values"], json!([0x04, 0x10, 0x14, 0x18]));
    assert_eq!(find(&seqs, "crv_mixed").steps.len(), 8);
}

#[test]
fn fifo_registers_fire_with_both_names() {
    let bp = blueprint("wb_spi");
    let (seqs, report) = run(&bp);
    assert!(report.fifo.fired);
    assert!(report.fifo.evidence.contains(&"register tx_fifo_data".to_string()));
    assert!(report.fifo.evidence.contains(&"register rx_fifo_data".to_string()));
    assert_eq!(
        report.fifo.sequences,
        ["fifo_fill", "fifo_drain", "fifo_overflow", "fifo_interleave"]
    );
    let writes = |s: &DslSequence| {
        s.steps
            .iter()
            .filter(|st| matches!(st, DslStep::RegisterWrite { addr: 0x04, .. }))
            .count()
    };
    let reads = |s: &DslSequence| {
        s.steps
            .iter()
            .filter(|st| matches!(st, DslStep::RegisterRead { addr: 0x00, .. }))
            .count()
    };
    assert_eq!(writes(find(&seqs, "fifo_fill")), 16);
    assert_eq!(reads(find(&seqs, "fifo_drain")), 16);
    assert_eq!(writes(find(&seqs, "fifo_overflow")), 17);
    let inter = find(&seqs, "fifo_interleave");
    assert_eq!((writes(inter), reads(inter)), (16, 16));
    assert!(matches!(inter.steps[0], DslStep::RegisterWrite { .. }));
    assert!(matches!(inter.steps[1], DslStep::RegisterRead { .. }));
}

#[test]
fn fifo_polls_a_status_register_when_there_is_one() {
    let bp = blueprint_with("wb_spi", |v| {
        v["registers"].as_array_mut().unwrap().push(json!(
            {"name": "fifo_status", "addr": "0x1C", "width": 8, "access": "ro"}
        ));
    });
    let (seqs, report) = run(&bp);
    check_self_consistent(&bp, &seqs, &report);
    let last = find(&seqs, "fifo_fill").steps.last().unwrap().clone();
    assert_eq!(
        last,
        DslStep::Poll {
            addr: 0x1C,
            mask: 0xFF,
            expected: 0,
            max_iters: 16 * 64,
            interval_cycles: 1
        }
    );
}

#[test]
fn token_matching_respects_boundaries() {
    // wb_eth has txen/rxen (no boundary) but tx_bd0 and tx_bd_num do match
    let (_, report) = run(&blueprint("wb_eth"));
    let ev = &report.fifo.evidence;
    assert!(ev.iter().any(|e| e == "register tx_bd0"));
    assert!(ev.iter().all(|e| !e.ends_with("txen") && !e.ends_with("rxen") && !e.contains("miitx")));
    let bp = blueprint_with("wb_gpio", |v| {
        v["registers"][4]["name"] = json!("rgpio_txen");
    });
    assert!(!run(&bp).1.fifo.fired);
}

#[test]
fn bank_detection() {
    let bp = blueprint("wb_dma");
    let banks = detect_banks(&bp, 2).unwrap();
    assert_eq!(banks.iter().map(|b| b.base).collect::<Vec<_>>(), [0x00, 0x20]);
    assert!(banks.iter().all(|b| b.registers.len() == 4));
    for name in ["wb_gpio", "wb_spi", "wb_eth", "axi_timer"] {
        assert!(detect_banks(&blueprint(name), 2).is_none(), "{name}");
    }
    // same layout but misaligned second bank
    let off = blueprint_with("wb_dma", |v| {
        for r in v["registers"].as_array_mut().unwrap()[4..].iter_mut() {
            let a = u64::from_str_radix(r["addr"].as_str().unwrap().trim_start_matches("0x"), 16).unwrap();
            r["addr"] = json!(format!("{:#x}", a - 0x8));
        }
    });
    assert!(detect_banks(&off, 2).is_none());
    assert!(detect_banks(&bp, 3).is_none());
}

#[test]
fn bank_write_orders() {
    let (seqs, report) = run(&blueprint("wb_dma"));
    assert!(report.bank.fired);
    let addrs = |name: &str| -> Vec<u64> {
        find(&seqs, name)
            .steps
            .iter()
            .map(|s| match s {
                DslStep::RegisterWrite { addr, .. } => *addr,
                other => panic!("{other:?}"),
            })
            .collect()
    };
    assert_eq!(addrs("bank_sequential"), [0x00, 0x04, 0x08, 0x0C, 0x20, 0x24, 0x28, 0x2C]);
    assert_eq!(addrs("bank_interleaved"), [0x00, 0x20, 0x04, 0x24, 0x08, 0x28, 0x0C, 0x2C]);
}

#[test]
fn toggles_cover_data_fields() {
    let (seqs, report) = run(&blueprint("wb_gpio"));
    assert!(report.toggle.fired);
    assert_eq!(report.toggle.sequences, ["toggle_rgpio_out", "toggle_rgpio_oe"]);
    let s = find(&seqs, "toggle_rgpio_out");
    let patterns: Vec<String> = s.steps.iter().map(|st| st.summary()).collect();
    assert_eq!(
        patterns,
        [
            "toggle_pattern rgpio_out walking_one",
            "toggle_pattern rgpio_out walking_zero",
            "toggle_pattern rgpio_out alternating"
        ]
    );
    assert!(!run(&blueprint("divider")).1.toggle.fired);
}

#[test]
fn bfm_smoke_calls() {
    let bp = blueprint("wb_eth");
    let (seqs, report) = run(&bp);
    assert_eq!(report.bfm.sequences, ["bfm_phy0", "bfm_host_mem"]);
    for decl in &bp.bfms {
        let seq = find(&seqs, &format!("bfm_{}", decl.instance_name));
        let smoke = &bfm_spec(decl.kind).smoke;
        assert_eq!(seq.steps.len(), smoke.len());
        for (step, call) in seq.steps.iter().zip(smoke) {
            let DslStep::BfmAction { bfm, action, params } = step else {
                panic!("{step:?}")
            };
            assert_eq!(bfm, &decl.instance_name);
            assert_eq!(action, &call.action);
            assert_eq!(params.len(), call.params.len());
        }
    }
}

#[test]
fn deterministic() {
    for name in ALL_BLUEPRINTS {
        let bp = blueprint(name);
        assert_eq!(run(&bp), run(&bp));
    }
}

// ---- random register maps ---------------------------------------------

const WORDS: [&str; 8] = ["tx", "rx", "fifo", "ctrl", "stat", "txen", "data", "cfg"];

#[derive(Debug, Clone)]
struct Reg {
    words: (usize, usize),
    slot: u64,
    access: usize,
}

fn random_bp(regs: &[Reg]) -> Blueprint {
    let mut seen = std::collections::BTreeSet::new();
    let mut registers = Vec::new();
    let mut fields = Vec::new();
    for (i, r) in regs.iter().enumerate() {
        if !seen.insert(r.slot) {
            continue;
        }
        let name = format!("{}_{}{i}", WORDS[r.words.0], WORDS[r.words.1]);
        let access = ["rw", "ro", "wo"][r.access];
        registers.push(json!({"name": name, "addr": format!("{:#x}", r.slot * 4), "width": 32, "access": access}));
        if access != "ro" {
            fields.push(json!({"name": name, "width": 32, "direction": "to_dut", "role": "data"}));
        }
    }
    blueprint_with("wb_gpio", |v| {
        v["registers"] = json!(registers);
        v["seq_item_fields"] = json!(fields);
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn random_maps_stay_valid(regs in prop::collection::vec(
        ((0..WORDS.len(), 0..WORDS.len()), 0u64..48, 0usize..3)
            .prop_map(|(words, slot, access)| Reg { words, slot, access }),
        1..12,
    )) {
        let bp = random_bp(&regs);
        let (seqs, report) = run(&bp);
        check_self_consistent(&bp, &seqs, &report);
        check_triggers(&bp, &report);
    }

    #[test]
    fn banked_maps_are_found(banks in 2usize..5, per in 2usize..5, gap in 0u64..3) {
        let span = (per as u64 * 4).next_power_of_two();
        let stride = span * (gap + 1);
        let mut regs = Vec::new();
        for b in 0..banks {
            for j in 0..per {
                let slot = (b as u64 * stride + j as u64 * 4) / 4;
                regs.push(Reg { words: (3, 7), slot, access: 0 });
            }
        }
        let bp = random_bp(&regs);
        let (seqs, report) = run(&bp);
        // adjacent banks with no gap merge into one run
        let merged = stride == per as u64 * 4;
        prop_assert_eq!(report.bank.fired, !merged);
        prop_assert_eq!(oracle_bank(&bp), !merged);
        if !merged {
            let seq = find(&seqs, "bank_sequential");
            prop_assert_eq!(seq.steps.len(), banks * per);
        }
    }
}
