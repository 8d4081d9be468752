// SPDX-License-Identifier: Apache-2.0

//! DSL steps to UVM sequence classes.
//!
//! Every transaction is one `start_item`/`finish_item` pair on a fresh item.
//! Sweeps are unrolled, one transaction per value or tuple, so the emitted
//! text can be counted against the step list. The only loop is the poll's
//! do-while, which is always bounded by an iteration counter.

use std::fmt::Write as _;

use super::resolve::{bus_members, constraint_fate, drive_target, ConstraintFate, DriveTarget};
use super::{DslSequence, DslStep, Relation};
use crate::blueprint::{mask, Blueprint, BusItemFields, RegisterDecl};
use crate::num::{hex, sv_hex};
use crate::strategy::{StimulusStrategy, StrategyMap};
use crate::templates::bfm_spec;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodegenError {
    #[error("unresolved signal `{0}`")]
    UnresolvedSignal(String),
    #[error("field `{0}` is not randomizable")]
    NotRandomizable(String),
}

pub fn sequence_class_name(bp: &Blueprint, name: &str) -> String {
    format!("{}_{name}_seq", bp.design_name)
}

pub fn vseq_class_name(bp: &Blueprint, iteration: usize) -> String {
    format!("{}_vseq_iter{iteration}", bp.design_name)
}

pub fn package_file_name(iteration: usize) -> String {
    format!("sequence_pkg_iter{iteration}.sv")
}

struct Emitter<'a> {
    bp: &'a Blueprint,
    strategies: &'a StrategyMap,
    item: String,
    out: String,
}

impl<'a> Emitter<'a> {
    fn line(&mut self, indent: usize, text: &str) {
        for _ in 0..indent {
            self.out.push_str("  ");
        }
        self.out.push_str(text);
        self.out.push('\n');
    }

    fn bus(&self) -> Result<BusItemFields, CodegenError> {
        bus_members(self.bp).ok_or_else(|| CodegenError::UnresolvedSignal("bus".into()))
    }

    fn register(&self, addr: u64) -> Result<&'a RegisterDecl, CodegenError> {
        self.bp
            .register_by_addr(addr)
            .ok_or_else(|| CodegenError::UnresolvedSignal(hex(addr)))
    }

    fn begin_item(&mut self, indent: usize) {
        let create = format!("req = {}::type_id::create(\"req\");", self.item);
        self.line(indent, &create);
        self.line(indent, "start_item(req);");
    }

    fn bus_write(&mut self, indent: usize, addr: u64, value: u64) -> Result<(), CodegenError> {
        let b = self.bus()?;
        self.begin_item(indent);
        self.line(indent, &format!("req.{} = {};", b.addr, sv_hex(b.addr_width, addr)));
        self.line(indent, &format!("req.{} = {};", b.wdata, sv_hex(b.data_width, value)));
        self.line(indent, &format!("req.{} = 1'b1;", b.write));
        self.line(indent, "finish_item(req);");
        Ok(())
    }

    fn bus_read(&mut self, indent: usize, addr: u64) -> Result<String, CodegenError> {
        let b = self.bus()?;
        self.begin_item(indent);
        self.line(indent, &format!("req.{} = {};", b.addr, sv_hex(b.addr_width, addr)));
        self.line(indent, &format!("req.{} = 1'b0;", b.write));
        self.line(indent, "finish_item(req);");
        Ok(b.rdata)
    }

    fn randomized_item(&mut self, indent: usize, assigns: &[(String, u32, u64)]) {
        self.begin_item(indent);
        self.line(indent, "if (!req.randomize())");
        self.line(indent + 1, "`uvm_error(\"RANDFAIL\", \"item randomization failed\")");
        for (name, width, value) in assigns {
            self.line(indent, &format!("req.{name} = {};", sv_hex(*width, *value)));
        }
        self.line(indent, "finish_item(req);");
    }

    /// One transaction setting every `(field, value)` pair.
    fn directed(&mut self, indent: usize, values: &[(&str, u64)]) -> Result<(), CodegenError> {
        let targets = values
            .iter()
            .map(|(f, v)| {
                drive_target(self.bp, f)
                    .map(|t| (t, *v))
                    .map_err(|_| CodegenError::UnresolvedSignal(f.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut register: Option<(&RegisterDecl, u64)> = None;
        let mut assigns = Vec::new();
        for (t, v) in targets {
            match t {
                DriveTarget::Item { name, width } => assigns.push((name.to_string(), width, v)),
                DriveTarget::Register {
                    register: r,
                    lsb,
                    width,
                } => {
                    let base = match register {
                        Some((prev, acc)) if prev.address == r.address => acc,
                        Some((prev, _)) => return Err(CodegenError::UnresolvedSignal(prev.name.clone())),
                        None => r.default_value(),
                    };
                    let m = mask(width) << lsb;
                    register = Some((r, (base & !m) | ((v << lsb) & m)));
                }
            }
        }
        match register {
            Some(_) if !assigns.is_empty() => Err(CodegenError::UnresolvedSignal(assigns[0].0.clone())),
            Some((r, value)) => self.bus_write(indent, r.address, value),
            None => {
                self.randomized_item(indent, &assigns);
                Ok(())
            }
        }
    }

    fn step(&mut self, index: usize, step: &DslStep) -> Result<(), CodegenError> {
        let bp = self.bp;
        self.line(2, &format!("// step {index}: {}", comment_text(&step.summary())));
        match step {
            DslStep::RegisterWrite { addr, value } => {
                self.register(*addr)?;
                self.bus_write(2, *addr, *value)?;
            }
            DslStep::RegisterRead { addr, store_as } => {
                self.register(*addr)?;
                let rdata = self.bus_read(2, *addr)?;
                self.line(2, &format!("{store_as} = req.{rdata};"));
                self.line(
                    2,
                    &format!(
                        "`uvm_info(get_type_name(), $sformatf(\"{store_as} = 0x%0h\", {store_as}), UVM_MEDIUM)"
                    ),
                );
            }
            DslStep::Poll {
                addr,
                mask: m,
                expected,
                max_iters,
                interval_cycles,
            } => {
                let reg = self.register(*addr)?;
                let cond = format!(
                    "(dsl_rdata & {}) != {}",
                    sv_hex(reg.width, *m),
                    sv_hex(reg.width, *expected)
                );
                self.line(2, "dsl_iters = 0;");
                self.line(2, "do begin");
                let rdata = self.bus_read(3, *addr)?;
                self.line(3, &format!("dsl_rdata = req.{rdata};"));
                self.line(3, "dsl_iters++;");
                self.line(3, &format!("if ({cond})"));
                self.line(4, &format!("repeat ({interval_cycles}) @(posedge vif.{});", bp.clock_signal));
                self.line(2, &format!("end while ({cond} && dsl_iters < {max_iters});"));
                self.line(2, &format!("if ({cond})"));
                self.line(
                    3,
                    &format!(
                        "`uvm_warning(\"POLLTIMEOUT\", $sformatf(\"{} not ready after %0d reads, last 0x%0h\", dsl_iters, dsl_rdata))",
                        reg.name
                    ),
                );
            }
            DslStep::RandomizeSend { constraints } => {
                let mut lines = Vec::new();
                for c in constraints {
                    let width = match constraint_fate(bp, &c.field) {
                        ConstraintFate::Keep { width } => width,
                        ConstraintFate::Drop(_) => return Err(CodegenError::NotRandomizable(c.field.clone())),
                        ConstraintFate::Reject(_) => return Err(CodegenError::UnresolvedSignal(c.field.clone())),
                    };
                    if matches!(self.strategies.get(&c.field), Some(StimulusStrategy::Fixed { .. })) {
                        return Err(CodegenError::NotRandomizable(c.field.clone()));
                    }
                    lines.push(match &c.relation {
                        Relation::Eq { value } => format!("{} == {};", c.field, sv_hex(width, *value)),
                        Relation::InSet { values } => {
                            let vs: Vec<String> = values.iter().map(|v| sv_hex(width, *v)).collect();
                            format!("{} inside {{{}}};", c.field, vs.join(", "))
                        }
                        Relation::InRange { lo, hi } => format!(
                            "{} inside {{[{}:{}]}};",
                            c.field,
                            sv_hex(width, *lo),
                            sv_hex(width, *hi)
                        ),
                    });
                }
                self.begin_item(2);
                if lines.is_empty() {
                    self.line(2, "if (!req.randomize())");
                } else {
                    self.line(2, "if (!req.randomize() with {");
                    for l in &lines {
                        self.line(3, l);
                    }
                    self.line(2, "})");
                }
                self.line(3, "`uvm_error(\"RANDFAIL\", \"randomize_send constraints unsatisfiable\")");
                self.line(2, "finish_item(req);");
            }
            DslStep::Delay { cycles } => {
                self.line(2, &format!("repeat ({cycles}) @(posedge vif.{});", bp.clock_signal));
            }
            DslStep::MemoryWrite { bfm, base_addr, data } => {
                let decl = bp.bfm(bfm).ok_or_else(|| CodegenError::UnresolvedSignal(bfm.clone()))?;
                let width = bfm_spec(decl.kind).data_width;
                for (i, v) in data.iter().enumerate() {
                    let addr = base_addr + i as u64;
                    self.line(
                        2,
                        &format!("$root.tb_top.{bfm}.preload({}, {});", sv_hex(32, addr), sv_hex(width, *v)),
                    );
                }
            }
            DslStep::BfmAction { bfm, action, params } => {
                let decl = bp.bfm(bfm).ok_or_else(|| CodegenError::UnresolvedSignal(bfm.clone()))?;
                let spec = bfm_spec(decl.kind)
                    .action(action)
                    .ok_or_else(|| CodegenError::UnresolvedSignal(format!("{bfm}.{action}")))?;
                let args = spec
                    .params
                    .iter()
                    .map(|p| {
                        params
                            .get(p)
                            .map(|v| v.to_string())
                            .ok_or_else(|| CodegenError::UnresolvedSignal(format!("{bfm}.{action}.{p}")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                self.line(2, &format!("$root.tb_top.{bfm}.{action}({});", args.join(", ")));
            }
            DslStep::ConfigSweep { fields } => {
                for tuple in cartesian(fields.iter().map(|f| f.values.as_slice())) {
                    let values: Vec<(&str, u64)> = fields.iter().map(|f| f.field.as_str()).zip(tuple).collect();
                    self.directed(2, &values)?;
                }
            }
            DslStep::ValueSweep { field, values } => {
                for v in values {
                    self.directed(2, &[(field, *v)])?;
                }
            }
            DslStep::TogglePattern { field, pattern } => {
                let width = drive_target(bp, field)
                    .map_err(|_| CodegenError::UnresolvedSignal(field.clone()))?
                    .width();
                for v in pattern.values(width) {
                    self.directed(2, &[(field, v)])?;
                }
            }
        }
        Ok(())
    }
}

/// Row-major product: the last list varies fastest.
pub(crate) fn cartesian<'a>(lists: impl Iterator<Item = &'a [u64]>) -> Vec<Vec<u64>> {
    lists.fold(vec![Vec::new()], |acc, list| {
        acc.iter()
            .flat_map(|prefix| {
                list.iter().map(move |v| {
                    let mut t = prefix.clone();
                    t.push(*v);
                    t
                })
            })
            .collect()
    })
}

fn comment_text(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_control() { ' ' } else { c })
        .collect::<String>()
        .replace("*/", "* /")
}

/// One sequence class. The sequence must already have passed
/// [`super::validate`] and [`super::apply_safety_filters`].
pub fn codegen(seq: &DslSequence, bp: &Blueprint, strategies: &StrategyMap) -> Result<String, CodegenError> {
    let class = sequence_class_name(bp, &seq.name);
    let mut e = Emitter {
        bp,
        strategies,
        item: format!("{}_seq_item", bp.design_name),
        out: String::new(),
    };
    e.line(0, &format!("class {class} extends {}_base_seq;", bp.design_name));
    e.line(1, &format!("`uvm_object_utils({class})"));
    e.out.push('\n');
    e.line(1, &format!("function new(string name = \"{class}\");"));
    e.line(2, "super.new(name);");
    e.line(1, "endfunction");
    e.out.push('\n');
    if !seq.description.trim().is_empty() {
        e.line(1, &format!("// {}", comment_text(seq.description.trim())));
    }
    e.line(1, "task body();");
    e.line(2, "bit [63:0] dsl_rdata;");
    e.line(2, "int unsigned dsl_iters;");
    let mut stores: Vec<&str> = Vec::new();
    for s in &seq.steps {
        if let DslStep::RegisterRead { store_as, .. } = s {
            if !stores.contains(&store_as.as_str()) {
                stores.push(store_as);
            }
        }
    }
    for s in stores {
        e.line(2, &format!("bit [63:0] {s};"));
    }
    for (i, step) in seq.steps.iter().enumerate() {
        e.step(i, step)?;
    }
    e.line(1, "endtask");
    e.line(0, "endclass");
    Ok(e.out)
}

/// All sequences of one iteration plus the virtual sequence that runs them
/// in order. The test starts `<design>_vseq_iter<N>` for N = 0, 1, ...
pub fn codegen_package(
    seqs: &[DslSequence],
    bp: &Blueprint,
    strategies: &StrategyMap,
    iteration: usize,
) -> Result<String, CodegenError> {
    let mut out = String::new();
    let _ = writeln!(out, "// {} sequences, iteration {iteration}", bp.design_name);
    for s in seqs {
        out.push('\n');
        out.push_str(&codegen(s, bp, strategies)?);
    }
    let vseq = vseq_class_name(bp, iteration);
    out.push('\n');
    let _ = writeln!(out, "class {vseq} extends {}_base_seq;", bp.design_name);
    let _ = writeln!(out, "  `uvm_object_utils({vseq})\n");
    let _ = writeln!(out, "  function new(string name = \"{vseq}\");");
    let _ = writeln!(out, "    super.new(name);");
    let _ = writeln!(out, "  endfunction\n");
    let _ = writeln!(out, "  task body();");
    for (i, s) in seqs.iter().enumerate() {
        let _ = writeln!(out, "    {} s{i};", sequence_class_name(bp, &s.name));
    }
    for (i, s) in seqs.iter().enumerate() {
        let class = sequence_class_name(bp, &s.name);
        let _ = writeln!(out, "    s{i} = {class}::type_id::create(\"{}\");", s.name);
        let _ = writeln!(out, "    s{i}.start(m_sequencer, this);");
    }
    let _ = writeln!(out, "  endtask");
    let _ = writeln!(out, "endclass");
    Ok(out)
}
