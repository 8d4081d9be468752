// SPDX-License-Identifier: Apache-2.0

//! Rule-based Stage-1 sequences.
//!
//! Six kinds, each behind a trigger that looks only at the Blueprint:
//!
//! | kind   | trigger                                   |
//! |--------|-------------------------------------------|
//! | crv    | always                                    |
//! | enum   | a field with the enumerate strategy       |
//! | toggle | registers present or a bus protocol       |
//! | fifo   | a tx/rx/fifo token in a register or field |
//! | bank   | two or more aligned, equally laid out register banks |
//! | bfm    | at least one BFM instance                 |
//!
//! Everything emitted is plain DSL and goes through the same checks and
//! filters as LLM output.

use serde::{Deserialize, Serialize};

use crate::blueprint::{mask, Blueprint, FieldDirection, FieldRole, RegisterDecl};
use crate::seq_dsl::{
    apply_safety_filters, check_step, drive_target, Constraint, DslConfig, DslSequence, DslStep, Relation,
    TogglePattern,
};
use crate::strategy::{StimulusStrategy, StrategyMap};
use crate::templates::bfm_spec;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredefinedConfig {
    /// Name tokens that mark a FIFO-like register or field.
    pub fifo_tokens: Vec<String>,
    /// Name tokens that mark a status register worth polling.
    pub status_tokens: Vec<String>,
    /// Pushes in the fill pattern; overflow pushes one more.
    pub fifo_depth: u32,
    /// Transactions per CRV sequence.
    pub crv_transactions: u32,
    /// Fewest banks that count as a banked register map.
    pub min_banks: usize,
}

impl Default for PredefinedConfig {
    fn default() -> Self {
        PredefinedConfig {
            fifo_tokens: vec!["tx".into(), "rx".into(), "fifo".into()],
            status_tokens: vec!["status".into(), "stat".into(), "sr".into()],
            fifo_depth: 16,
            crv_transactions: 8,
            min_banks: 2,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct KindReport {
    pub fired: bool,
    /// Names that made the trigger fire.
    pub evidence: Vec<String>,
    /// Sequences emitted for this kind.
    pub sequences: Vec<String>,
    /// Generated steps that failed checks and were left out. Empty for any
    /// consistent Blueprint.
    pub skipped: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct TriggerReport {
    pub crv: KindReport,
    #[serde(rename = "enum")]
    pub enumerate: KindReport,
    pub toggle: KindReport,
    pub fifo: KindReport,
    pub bank: KindReport,
    pub bfm: KindReport,
}

impl TriggerReport {
    /// (kind name, report) in table order.
    pub fn kinds(&self) -> [(&'static str, &KindReport); 6] {
        [
            ("crv", &self.crv),
            ("enum", &self.enumerate),
            ("toggle", &self.toggle),
            ("fifo", &self.fifo),
            ("bank", &self.bank),
            ("bfm", &self.bfm),
        ]
    }
}

/// Splits an identifier into lowercase tokens at `_`, case changes and
/// letter/digit boundaries: `TxFifo_lvl2` gives `tx fifo lvl 2`.
pub fn name_tokens(name: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut prev: Option<char> = None;
    for c in name.chars() {
        if !c.is_ascii_alphanumeric() {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            prev = None;
            continue;
        }
        if let Some(p) = prev {
            let split = (p.is_ascii_lowercase() && c.is_ascii_uppercase())
                || (p.is_ascii_digit() != c.is_ascii_digit());
            if split && !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
        }
        cur.push(c.to_ascii_lowercase());
        prev = Some(c);
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn has_token(name: &str, tokens: &[String]) -> bool {
    name_tokens(name).iter().any(|t| tokens.contains(t))
}

// ---- triggers ---------------------------------------------------------

fn enum_fields(bp: &Blueprint, strategies: &StrategyMap) -> Vec<(String, Vec<u64>)> {
    bp.seq_item_fields
        .iter()
        .filter_map(|f| match strategies.get(&f.name) {
            Some(StimulusStrategy::Enumerate { values }) => Some((f.name.clone(), values.clone())),
            _ => None,
        })
        .collect()
}

fn toggle_evidence(bp: &Blueprint) -> Vec<String> {
    let mut ev = Vec::new();
    if bp.protocol.is_bus() {
        ev.push(format!("protocol {}", bp.protocol.scope_name()));
    }
    if !bp.register_map.is_empty() {
        ev.push(format!("{} registers", bp.register_map.len()));
    }
    ev
}

fn fifo_evidence(bp: &Blueprint, cfg: &PredefinedConfig) -> Vec<String> {
    let regs = bp
        .register_map
        .iter()
        .filter(|r| has_token(&r.name, &cfg.fifo_tokens))
        .map(|r| format!("register {}", r.name));
    let fields = bp
        .seq_item_fields
        .iter()
        .filter(|f| has_token(&f.name, &cfg.fifo_tokens))
        .map(|f| format!("field {}", f.name));
    regs.chain(fields).collect()
}

/// A group of registers at `base + k * stride`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bank<'a> {
    pub base: u64,
    pub registers: Vec<&'a RegisterDecl>,
}

/// Bank detection. Registers are sorted by address and cut into runs of
/// equal spacing (the smallest gap in the map). The map is banked when
/// there are at least `min_banks` runs, all runs have the same length (two
/// or more registers), every run base is aligned to the run's span rounded
/// up to a power of two, and the bases themselves are evenly spaced.
pub fn detect_banks<'a>(bp: &'a Blueprint, min_banks: usize) -> Option<Vec<Bank<'a>>> {
    let mut regs: Vec<&RegisterDecl> = bp.register_map.iter().collect();
    regs.sort_by_key(|r| r.address);
    regs.dedup_by_key(|r| r.address);
    if regs.len() < 2 * min_banks.max(1) {
        return None;
    }
    let step = regs.windows(2).map(|w| w[1].address - w[0].address).min()?;
    let mut runs: Vec<Vec<&RegisterDecl>> = vec![vec![regs[0]]];
    for w in regs.windows(2) {
        if w[1].address - w[0].address == step {
            runs.last_mut().expect("runs start non-empty").push(w[1]);
        } else {
            runs.push(vec![w[1]]);
        }
    }
    let len = runs[0].len();
    if runs.len() < min_banks.max(2) || len < 2 || runs.iter().any(|r| r.len() != len) {
        return None;
    }
    let align = (len as u64 * step).next_power_of_two();
    let bases: Vec<u64> = runs.iter().map(|r| r[0].address).collect();
    let stride = bases[1] - bases[0];
    let even = bases.windows(2).all(|w| w[1] - w[0] == stride);
    if !even || bases.iter().any(|b| b % align != 0) {
        return None;
    }
    Some(
        runs.into_iter()
            .map(|registers| Bank {
                base: registers[0].address,
                registers,
            })
            .collect(),
    )
}

// ---- generators -------------------------------------------------------

struct Builder<'a> {
    bp: &'a Blueprint,
    dsl: DslConfig,
    out: Vec<DslSequence>,
}

impl Builder<'_> {
    /// Adds a sequence after dropping any step that fails validation or the
    /// safety filters. Empty sequences are not added.
    fn emit(&mut self, report: &mut KindReport, name: &str, description: &str, steps: Vec<DslStep>) {
        let mut kept = Vec::new();
        for (i, step) in steps.into_iter().enumerate() {
            let errors = check_step(&format!("{name}.steps[{i}]"), &step, self.bp, &self.dsl);
            match errors.first() {
                Some(e) => report.skipped.push(e.to_string()),
                None => kept.push(step),
            }
        }
        let (seq, log) = apply_safety_filters(&DslSequence::new(name, description, kept), self.bp);
        for e in &log.events {
            report.skipped.push(format!("{name}: {}", serde_json::to_string(e).unwrap_or_default()));
        }
        if !seq.steps.is_empty() {
            report.sequences.push(seq.name.clone());
            self.out.push(seq);
        }
    }
}

fn in_set(field: &str, values: Vec<u64>) -> Constraint {
    Constraint {
        field: field.to_string(),
        relation: Relation::InSet { values },
    }
}

fn crv(b: &mut Builder<'_>, report: &mut KindReport, cfg: &PredefinedConfig) {
    let bp = b.bp;
    let n = cfg.crv_transactions.max(1) as usize;
    report.fired = true;
    report.evidence.push("always".into());
    match bp.bus_item_fields() {
        Some(bus) => {
            let addrs = |pick: fn(&RegisterDecl) -> bool| -> Vec<u64> {
                bp.register_map.iter().filter(|r| pick(r)).map(|r| r.address).collect()
            };
            let send = |write: Option<u64>, addrs: Vec<u64>| {
                let mut constraints = Vec::new();
                if let Some(w) = write {
                    constraints.push(Constraint::eq(&bus.write, w));
                }
                if !addrs.is_empty() {
                    constraints.push(in_set(&bus.addr, addrs));
                }
                DslStep::RandomizeSend { constraints }
            };
            let writes = addrs(|r| r.access.writable());
            let reads = addrs(|r| r.access.readable());
            let all = addrs(|_| true);
            b.emit(
                report,
                "crv_random_writes",
                "random bus writes to writable registers",
                vec![send(Some(1), writes); n],
            );
            b.emit(
                report,
                "crv_random_reads",
                "random bus reads from readable registers",
                vec![send(Some(0), reads); n],
            );
            b.emit(report, "crv_mixed", "random reads and writes anywhere in the map", vec![send(None, all); n]);
        }
        None => {
            let send = DslStep::RandomizeSend { constraints: vec![] };
            let settle = DslStep::Delay {
                cycles: bp.ack_timeout_cycles.clamp(1, 16),
            };
            b.emit(report, "crv_random_writes", "back-to-back random transactions", vec![send.clone(); n]);
            let mut reads = Vec::new();
            for _ in 0..n {
                reads.push(send.clone());
                reads.push(settle.clone());
            }
            b.emit(
                report,
                "crv_random_reads",
                "random transactions with idle time for the results",
                reads,
            );
            // alternate free transactions with ones pinned to the corners of
            // every wide data field
            let corners: Vec<Constraint> = bp
                .seq_item_fields
                .iter()
                .filter(|f| f.direction == FieldDirection::ToDut && f.role == FieldRole::Data)
                .filter(|f| drive_target(bp, &f.name).is_ok())
                .map(|f| in_set(&f.name, vec![0, mask(f.width)]))
                .collect();
            let corner = DslStep::RandomizeSend { constraints: corners };
            let mixed = (0..n)
                .map(|i| if i % 2 == 0 { send.clone() } else { corner.clone() })
                .collect();
            b.emit(report, "crv_mixed", "random transactions mixed with data corner values", mixed);
        }
    }
}

fn enumerate(b: &mut Builder<'_>, report: &mut KindReport, strategies: &StrategyMap) {
    for (field, values) in enum_fields(b.bp, strategies) {
        report.fired = true;
        report.evidence.push(format!("field {field}"));
        let steps = vec![DslStep::ValueSweep {
            field: field.clone(),
            values,
        }];
        b.emit(report, &format!("enum_{field}"), "every value of a narrow field", steps);
    }
}

fn toggle(b: &mut Builder<'_>, report: &mut KindReport) {
    report.evidence = toggle_evidence(b.bp);
    report.fired = !report.evidence.is_empty();
    if !report.fired {
        return;
    }
    let fields: Vec<String> = b
        .bp
        .seq_item_fields
        .iter()
        .filter(|f| f.direction == FieldDirection::ToDut && f.role == FieldRole::Data)
        .map(|f| f.name.clone())
        .collect();
    for field in fields {
        let steps = TogglePattern::ALL
            .into_iter()
            .map(|pattern| DslStep::TogglePattern {
                field: field.clone(),
                pattern,
            })
            .collect();
        b.emit(report, &format!("toggle_{field}"), "walking-1, walking-0 and alternating bits", steps);
    }
}

fn fifo(b: &mut Builder<'_>, report: &mut KindReport, cfg: &PredefinedConfig) {
    let bp = b.bp;
    report.evidence = fifo_evidence(bp, cfg);
    report.fired = !report.evidence.is_empty();
    if !report.fired {
        return;
    }
    let depth = cfg.fifo_depth.max(1) as u64;
    let matched = || bp.register_map.iter().filter(|r| has_token(&r.name, &cfg.fifo_tokens));
    let push = bp.protocol.is_bus().then(|| matched().find(|r| r.access.writable())).flatten();
    let pop = bp.protocol.is_bus().then(|| matched().find(|r| r.access.readable())).flatten();
    let status = bp
        .register_map
        .iter()
        .find(|r| r.access.readable() && has_token(&r.name, &cfg.status_tokens));

    let Some(push) = push else {
        // no bus register to push through: drive the matched fields directly
        let fields: Vec<(String, u32)> = bp
            .seq_item_fields
            .iter()
            .filter(|f| has_token(&f.name, &cfg.fifo_tokens) && drive_target(bp, &f.name).is_ok())
            .map(|f| (f.name.clone(), f.width))
            .collect();
        for (field, width) in fields {
            let values = |n: u64| (1..=n).map(|i| i & mask(width)).collect::<Vec<_>>();
            let sweep = |n| DslStep::ValueSweep {
                field: field.clone(),
                values: values(n),
            };
            b.emit(report, &format!("fifo_fill_{field}"), "push until full", vec![sweep(depth)]);
            b.emit(report, &format!("fifo_overflow_{field}"), "push past full", vec![sweep(depth + 1)]);
        }
        return;
    };

    let value = |i: u64| (i + 1) & mask(push.width);
    let write = |i: u64| DslStep::RegisterWrite {
        addr: push.address,
        value: value(i),
    };
    let read = |r: &RegisterDecl| DslStep::RegisterRead {
        addr: r.address,
        store_as: "fifo_data".into(),
    };
    let wait_idle = status.map(|s| DslStep::Poll {
        addr: s.address,
        mask: mask(s.width),
        expected: 0,
        max_iters: depth as u32 * 64,
        interval_cycles: 1,
    });

    let mut fill: Vec<DslStep> = (0..depth).map(write).collect();
    fill.extend(wait_idle.clone());
    b.emit(report, "fifo_fill", "push until full", fill);

    if let Some(pop) = pop {
        let mut drain: Vec<DslStep> = (0..depth).map(|_| read(pop)).collect();
        drain.extend(wait_idle.clone());
        b.emit(report, "fifo_drain", "pop until empty", drain);
    }

    let mut overflow: Vec<DslStep> = (0..=depth).map(write).collect();
    overflow.extend(wait_idle.clone());
    overflow.extend(pop.map(read));
    b.emit(report, "fifo_overflow", "push one past full", overflow);

    let mut interleave = Vec::new();
    for i in 0..depth {
        interleave.push(write(i));
        interleave.extend(pop.map(read));
    }
    interleave.extend(wait_idle);
    b.emit(report, "fifo_interleave", "alternating push and pop", interleave);
}

fn bank(b: &mut Builder<'_>, report: &mut KindReport, cfg: &PredefinedConfig) {
    let Some(banks) = detect_banks(b.bp, cfg.min_banks) else {
        return;
    };
    report.fired = true;
    report.evidence = banks
        .iter()
        .map(|bank| {
            let names: Vec<&str> = bank.registers.iter().map(|r| r.name.as_str()).collect();
            format!("bank @{}: {}", crate::num::hex(bank.base), names.join(", "))
        })
        .collect();
    let write = |bank: usize, slot: usize, r: &RegisterDecl| DslStep::RegisterWrite {
        addr: r.address,
        value: (((bank as u64 + 1) << 8) | slot as u64) & mask(r.width),
    };
    let mut seq = Vec::new();
    for (i, bank) in banks.iter().enumerate() {
        for (j, r) in bank.registers.iter().enumerate() {
            if r.access.writable() {
                seq.push(write(i, j, r));
            }
        }
    }
    b.emit(report, "bank_sequential", "fill each bank in turn", seq);
    let mut inter = Vec::new();
    for j in 0..banks[0].registers.len() {
        for (i, bank) in banks.iter().enumerate() {
            let r = bank.registers[j];
            if r.access.writable() {
                inter.push(write(i, j, r));
            }
        }
    }
    b.emit(report, "bank_interleaved", "same slot across all banks, slot by slot", inter);
}

fn bfm(b: &mut Builder<'_>, report: &mut KindReport) {
    for decl in &b.bp.bfms {
        report.fired = true;
        report.evidence.push(format!("{} {}", decl.kind.as_str(), decl.instance_name));
        let steps = bfm_spec(decl.kind)
            .smoke
            .iter()
            .map(|call| DslStep::BfmAction {
                bfm: decl.instance_name.clone(),
                action: call.action.clone(),
                params: call.params.iter().cloned().collect(),
            })
            .collect();
        b.emit(report, &format!("bfm_{}", decl.instance_name), "BFM smoke actions", steps);
    }
}

pub fn infer_predefined(bp: &Blueprint, strategies: &StrategyMap) -> (Vec<DslSequence>, TriggerReport) {
    infer_predefined_with(bp, strategies, &PredefinedConfig::default())
}

pub fn infer_predefined_with(
    bp: &Blueprint,
    strategies: &StrategyMap,
    cfg: &PredefinedConfig,
) -> (Vec<DslSequence>, TriggerReport) {
    let mut b = Builder {
        bp,
        dsl: DslConfig::default(),
        out: Vec::new(),
    };
    let mut report = TriggerReport::default();
    crv(&mut b, &mut report.crv, cfg);
    enumerate(&mut b, &mut report.enumerate, strategies);
    toggle(&mut b, &mut report.toggle);
    fifo(&mut b, &mut report.fifo, cfg);
    bank(&mut b, &mut report.bank, cfg);
    bfm(&mut b, &mut report.bfm);
    (b.out, report)
}
