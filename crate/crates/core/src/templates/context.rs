// SPDX-License-Identifier: Apache-2.0

//! Builds the render context (a JSON object) that every template reads from.

use serde_json::{json, Map, Value};

use crate::blueprint::{
    ActiveLevel, Blueprint, BusInterface, CoverBinKind, FieldDirection, FieldTarget, HandshakeVariant,
    PortClass, SeqItemField,
};
use crate::num::sv_hex;
use crate::strategy::{infer_strategy, StimulusStrategy, StrategyMap};

use super::BfmSpec;

/// Upper bound on virtual sequences the generated test will look up.
const MAX_VSEQ: u32 = 256;

/// Auto bins for a field of this width: one per value up to 4 bits,
/// otherwise 16 equal ranges.
pub const AUTO_RANGE_BINS: u32 = 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverBinSpec {
    pub name: String,
    pub lo: u64,
    pub hi: u64,
}

pub fn auto_bins(prefix: &str, width: u32) -> Vec<CoverBinSpec> {
    if width <= 4 {
        (0..1u64 << width)
            .map(|v| CoverBinSpec {
                name: format!("{prefix}v{v}"),
                lo: v,
                hi: v,
            })
            .collect()
    } else {
        let span = (1u128 << width) / AUTO_RANGE_BINS as u128;
        (0..AUTO_RANGE_BINS as u128)
            .map(|i| CoverBinSpec {
                name: format!("{prefix}r{i}"),
                lo: (i * span) as u64,
                hi: ((i + 1) * span - 1) as u64,
            })
            .collect()
    }
}

fn range(width: u32) -> String {
    if width <= 1 {
        String::new()
    } else {
        format!("[{}:0] ", width - 1)
    }
}

fn bin_expr(width: u32, b: &CoverBinSpec) -> String {
    if b.lo == b.hi {
        format!("{{{}}}", sv_hex(width, b.lo))
    } else {
        format!("{{[{}:{}]}}", sv_hex(width, b.lo), sv_hex(width, b.hi))
    }
}

fn field_bins(f: &SeqItemField) -> Vec<CoverBinSpec> {
    match &f.cover_bins {
        None => auto_bins("", f.width),
        Some(bins) => bins
            .iter()
            .flat_map(|b| match b.kind {
                CoverBinKind::Value(v) => vec![CoverBinSpec {
                    name: b.name.clone(),
                    lo: v,
                    hi: v,
                }],
                CoverBinKind::Range { lo, hi } => vec![CoverBinSpec {
                    name: b.name.clone(),
                    lo,
                    hi,
                }],
                CoverBinKind::AutoWidth => auto_bins(&format!("{}_", b.name), f.width),
            })
            .collect(),
    }
}

fn covergroups(bp: &Blueprint) -> Value {
    Value::Array(
        bp.seq_item_fields
            .iter()
            .map(|f| {
                let bins: Vec<Value> = field_bins(f)
                    .iter()
                    .map(|b| json!({"name": b.name, "expr": bin_expr(f.width, b)}))
                    .collect();
                json!({
                    "name": format!("cg_{}", f.name),
                    "coverpoint": format!("cp_{}", f.name),
                    "field": f.name,
                    "bins": bins,
                })
            })
            .collect(),
    )
}

struct ItemMember {
    name: String,
    width: u32,
    rand: bool,
    fixed: Option<u64>,
}

fn item_members(bp: &Blueprint, strategies: &StrategyMap) -> Vec<ItemMember> {
    let mut out: Vec<ItemMember> = bp
        .seq_item_fields
        .iter()
        .map(|f| {
            let strategy = match f.direction {
                FieldDirection::FromDut => None,
                FieldDirection::ToDut => Some(
                    strategies
                        .get(&f.name)
                        .cloned()
                        .unwrap_or_else(|| infer_strategy(f)),
                ),
            };
            ItemMember {
                name: f.name.clone(),
                width: f.width,
                rand: strategy.as_ref().is_some_and(|s| s.is_randomizable()),
                fixed: match strategy {
                    Some(StimulusStrategy::Fixed { value }) => Some(value),
                    _ => None,
                },
            }
        })
        .collect();
    if let Some(b) = bp.bus_item_fields() {
        for (name, width, rand) in [
            (&b.addr, b.addr_width, true),
            (&b.wdata, b.data_width, true),
            (&b.rdata, b.data_width, false),
            (&b.write, 1, true),
        ] {
            if !out.iter().any(|m| &m.name == name) {
                out.push(ItemMember {
                    name: name.clone(),
                    width,
                    rand,
                    fixed: None,
                });
            }
        }
    }
    out
}

fn bus_slots(bp: &Blueprint) -> Value {
    let opt = |o: &Option<String>| json!(o.clone().unwrap_or_default());
    match &bp.bus {
        BusInterface::Wishbone(w) => json!({
            "cyc": w.cyc, "stb": w.stb, "ack": w.ack, "we": w.we, "adr": w.adr,
            "dat_w": w.dat_w, "dat_r": w.dat_r, "sel": opt(&w.sel), "err": opt(&w.err),
        }),
        BusInterface::Axi4Lite(a) => json!({
            "awaddr": a.awaddr, "awvalid": a.awvalid, "awready": a.awready,
            "wdata": a.wdata, "wstrb": opt(&a.wstrb), "wvalid": a.wvalid, "wready": a.wready,
            "bresp": opt(&a.bresp), "bvalid": a.bvalid, "bready": a.bready,
            "araddr": a.araddr, "arvalid": a.arvalid, "arready": a.arready,
            "rdata": a.rdata, "rresp": opt(&a.rresp), "rvalid": a.rvalid, "rready": a.rready,
        }),
        BusInterface::Direct(d) => json!({
            "variant": d.variant.as_str(),
            "start": opt(&d.start), "valid": opt(&d.valid), "ready": opt(&d.ready),
            "done": opt(&d.done), "busy": opt(&d.busy), "last": opt(&d.last),
        }),
    }
}

fn monitor_slots(bp: &Blueprint, members: &[ItemMember]) -> Value {
    let (qualifier, track) = match &bp.bus {
        BusInterface::Wishbone(w) => (format!("vif.{} && vif.{} && vif.{}", w.cyc, w.stb, w.ack), String::new()),
        BusInterface::Axi4Lite(a) => (
            format!(
                "(vif.{} && vif.{}) || (vif.{} && vif.{})",
                a.bvalid, a.bready, a.rvalid, a.rready
            ),
            String::new(),
        ),
        BusInterface::Direct(d) => {
            let s = |o: &Option<String>| o.clone().unwrap_or_default();
            match d.variant {
                HandshakeVariant::ReadyDone => (format!("vif.{}", s(&d.done)), String::new()),
                HandshakeVariant::ValidReady => {
                    (format!("vif.{} && vif.{}", s(&d.valid), s(&d.ready)), String::new())
                }
                HandshakeVariant::Busy => (format!("prev_track && !vif.{}", s(&d.busy)), s(&d.busy)),
                HandshakeVariant::Streaming => match &d.ready {
                    Some(r) => (format!("vif.{} && vif.{r}", s(&d.valid)), String::new()),
                    None => (format!("vif.{}", s(&d.valid)), String::new()),
                },
            }
        }
    };

    let bus_item = bp.bus_item_fields();
    let mut samples = Vec::new();
    for m in members {
        let expr = match (&bp.bus, &bus_item) {
            (BusInterface::Axi4Lite(a), Some(b)) if m.name == b.write => Some(format!("vif.{}", a.bvalid)),
            (BusInterface::Axi4Lite(a), Some(b)) if m.name == b.addr => {
                Some(format!("vif.{} ? vif.{} : vif.{}", a.bvalid, a.awaddr, a.araddr))
            }
            _ => bp.port(&m.name).map(|p| format!("vif.{}", p.name)),
        };
        if let Some(expr) = expr {
            samples.push(json!({"field": m.name, "expr": expr}));
        }
    }

    let mut projections = Vec::new();
    if let Some(b) = &bus_item {
        for f in &bp.seq_item_fields {
            let (reg, slice) = match bp.field_target(&f.name) {
                Some(FieldTarget::RegisterField { register, field }) => {
                    (register, format!("[{}:{}]", field.msb, field.lsb))
                }
                Some(FieldTarget::Register(register)) => (register, String::new()),
                _ => continue,
            };
            let addr = sv_hex(b.addr_width, reg.address);
            let (cond, data) = if f.direction == FieldDirection::FromDut && reg.access.readable() {
                (format!("!t.{} && t.{} == {addr}", b.write, b.addr), &b.rdata)
            } else if reg.access.writable() {
                (format!("t.{} && t.{} == {addr}", b.write, b.addr), &b.wdata)
            } else {
                (format!("!t.{} && t.{} == {addr}", b.write, b.addr), &b.rdata)
            };
            projections.push(json!({
                "field": f.name,
                "cond": cond,
                "expr": format!("t.{data}{slice}"),
            }));
        }
    }

    json!({
        "qualifier": qualifier,
        "track": track,
        "samples": samples,
        "projections": projections,
    })
}

fn scoreboard_slots(bp: &Blueprint) -> Value {
    let Some(b) = bp.bus_item_fields() else {
        return json!({"shadow": false});
    };
    let checked: Vec<String> = bp
        .register_map
        .iter()
        .filter(|r| r.access.readable() && r.access.writable())
        .map(|r| sv_hex(b.addr_width, r.address))
        .collect();
    json!({
        "shadow": !checked.is_empty(),
        "data_msb": b.data_width.saturating_sub(1),
        "addr_msb": b.addr_width.saturating_sub(1),
        "write": b.write,
        "addr": b.addr,
        "wdata": b.wdata,
        "rdata": b.rdata,
        "checked_addrs": checked,
    })
}

pub fn build_context(bp: &Blueprint, strategies: &StrategyMap) -> Value {
    let mut ctx = Map::new();
    ctx.insert("design".into(), json!(bp.design_name));
    ctx.insert("protocol".into(), json!(bp.protocol.scope_name()));
    ctx.insert("clock".into(), json!(bp.clock_signal));
    if !bp.reset.name.is_empty() {
        let (on, off) = match bp.reset.active {
            ActiveLevel::High => ("1'b1", "1'b0"),
            ActiveLevel::Low => ("1'b0", "1'b1"),
        };
        ctx.insert("reset".into(), json!(bp.reset.name));
        ctx.insert("reset_active".into(), json!(on));
        ctx.insert("reset_inactive".into(), json!(off));
    }
    ctx.insert("ack_timeout".into(), json!(bp.ack_timeout_cycles));
    ctx.insert("bus".into(), bus_slots(bp));

    let bus_item = bp.bus_item_fields();
    ctx.insert(
        "bus_item".into(),
        match &bus_item {
            Some(b) => json!({"addr": b.addr, "wdata": b.wdata, "rdata": b.rdata, "write": b.write}),
            None => Value::Null,
        },
    );
    let is_bus_member = |name: &str| {
        bus_item
            .as_ref()
            .is_some_and(|b| [&b.addr, &b.wdata, &b.rdata, &b.write].iter().any(|n| n.as_str() == name))
    };

    let port_fields: Vec<Value> = bp
        .seq_item_fields
        .iter()
        .filter(|f| f.direction == FieldDirection::ToDut && !is_bus_member(&f.name))
        .filter(|f| bp.port(&f.name).is_some_and(|p| p.class == PortClass::Stimulus))
        .map(|f| json!({"name": f.name}))
        .collect();
    ctx.insert("port_fields".into(), Value::Array(port_fields));
    let result_fields: Vec<Value> = bp
        .seq_item_fields
        .iter()
        .filter(|f| f.direction == FieldDirection::FromDut && !is_bus_member(&f.name))
        .filter(|f| bp.port(&f.name).is_some())
        .map(|f| json!({"name": f.name}))
        .collect();
    ctx.insert("result_fields".into(), Value::Array(result_fields));

    let members = item_members(bp, strategies);
    ctx.insert(
        "item_fields".into(),
        Value::Array(
            members
                .iter()
                .map(|m| {
                    let kw = if m.rand { "rand " } else { "" };
                    json!({
                        "name": m.name,
                        "decl": format!("{kw}logic {}{};", range(m.width), m.name),
                    })
                })
                .collect(),
        ),
    );
    ctx.insert(
        "fixed_fields".into(),
        Value::Array(
            members
                .iter()
                .filter_map(|m| m.fixed.map(|v| json!({"name": m.name, "value": sv_hex(m.width, v)})))
                .collect(),
        ),
    );
    ctx.insert(
        "addr_constraint".into(),
        match &bus_item {
            Some(b) if !bp.register_map.is_empty() => {
                let values: Vec<String> = bp
                    .register_map
                    .iter()
                    .map(|r| sv_hex(b.addr_width, r.address))
                    .collect();
                json!({"field": b.addr, "values": values.join(", ")})
            }
            _ => Value::Null,
        },
    );

    ctx.insert("monitor".into(), monitor_slots(bp, &members));
    ctx.insert("scoreboard".into(), scoreboard_slots(bp));
    ctx.insert("covergroups".into(), covergroups(bp));

    ctx.insert(
        "if_signals".into(),
        Value::Array(
            bp.raw_port_list
                .iter()
                .filter(|p| p.name != bp.clock_signal)
                .map(|p| json!({"name": p.name, "range": range(p.width)}))
                .collect(),
        ),
    );
    ctx.insert(
        "dut_ports".into(),
        Value::Array(
            bp.raw_port_list
                .iter()
                .map(|p| {
                    let conn = if p.name == bp.clock_signal {
                        p.name.clone()
                    } else {
                        format!("vif.{}", p.name)
                    };
                    json!({"name": p.name, "conn": conn})
                })
                .collect(),
        ),
    );
    ctx.insert(
        "bfms".into(),
        Value::Array(
            bp.bfms
                .iter()
                .map(|b| {
                    let conns: Vec<Value> = b
                        .connections
                        .iter()
                        .map(|(port, signal)| json!({"port": port, "signal": signal}))
                        .collect();
                    json!({
                        "module": super::bfm_module_name(b),
                        "instance": b.instance_name,
                        "connections": conns,
                    })
                })
                .collect(),
        ),
    );
    ctx.insert("max_vseq".into(), json!(MAX_VSEQ));
    Value::Object(ctx)
}

pub(super) fn add_bfm_slots(ctx: &mut Value, module: &str, spec: &BfmSpec) {
    if let Value::Object(m) = ctx {
        m.insert("module".into(), json!(module));
        m.insert("data_width".into(), json!(spec.data_width));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auto_bins_small_width_enumerates() {
        let bins = auto_bins("", 3);
        assert_eq!(bins.len(), 8);
        assert!(bins.iter().enumerate().all(|(i, b)| b.lo == i as u64 && b.hi == i as u64));
    }

    #[test]
    fn auto_bins_wide_field_splits_evenly() {
        let bins = auto_bins("", 8);
        assert_eq!(bins.len(), 16);
        assert_eq!((bins[0].lo, bins[0].hi), (0, 15));
        assert_eq!((bins[15].lo, bins[15].hi), (240, 255));
        let bins = auto_bins("", 64);
        assert_eq!(bins[15].hi, u64::MAX);
        assert_eq!(bins[1].lo, 1u64 << 60);
    }

    #[test]
    fn bin_expressions() {
        let b = CoverBinSpec {
            name: "x".into(),
            lo: 0,
            hi: 127,
        };
        assert_eq!(bin_expr(8, &b), "{[8'h00:8'h7F]}");
        let v = CoverBinSpec {
            name: "y".into(),
            lo: 5,
            hi: 5,
        };
        assert_eq!(bin_expr(3, &v), "{3'h5}");
    }
}
