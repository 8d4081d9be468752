// SPDX-License-Identifier: Apache-2.0

use serde_json::{json, Map, Value};

use super::*;
use crate::num::hex;

pub(super) fn to_json_value(bp: &Blueprint) -> Value {
    let mut root = Map::new();
    root.insert("schema_version".into(), json!(bp.schema_version));
    root.insert("design_name".into(), json!(bp.design_name));
    root.insert(
        "protocol".into(),
        match bp.protocol {
            Protocol::Direct(v) => json!({"type": "direct", "variant": v.as_str()}),
            Protocol::Wishbone => json!({"type": "wishbone"}),
            Protocol::Axi4Lite => json!({"type": "axi4lite"}),
        },
    );
    root.insert("clock".into(), json!(bp.clock_signal));
    root.insert(
        "reset".into(),
        json!({
            "name": bp.reset.name,
            "active": match bp.reset.active {
                ActiveLevel::High => "high",
                ActiveLevel::Low => "low",
            },
        }),
    );
    root.insert(
        "ports".into(),
        Value::Array(
            bp.raw_port_list
                .iter()
                .map(|p| json!({"name": p.name, "width": p.width, "dir": p.direction.as_str()}))
                .collect(),
        ),
    );
    root.insert(
        "seq_item_fields".into(),
        Value::Array(bp.seq_item_fields.iter().map(field).collect()),
    );
    root.insert(
        "registers".into(),
        Value::Array(bp.register_map.iter().map(register).collect()),
    );
    root.insert(
        "bfms".into(),
        Value::Array(
            bp.bfms
                .iter()
                .map(|b| {
                    json!({
                        "kind": b.kind.as_str(),
                        "name": b.instance_name,
                        "connections": b.connections,
                    })
                })
                .collect(),
        ),
    );
    root.insert(
        "agents".into(),
        Value::Array(
            bp.agents
                .iter()
                .map(|a| {
                    json!({
                        "name": a.name,
                        "active": a.active,
                        "monitor": a.monitor.iter()
                            .map(|m| json!({"signal": m.signal, "width": m.width}))
                            .collect::<Vec<_>>(),
                        "coverpoints": a.coverpoints,
                    })
                })
                .collect(),
        ),
    );
    root.insert("ack_timeout_cycles".into(), json!(bp.ack_timeout_cycles));
    Value::Object(root)
}

fn field(f: &SeqItemField) -> Value {
    let mut m = Map::new();
    m.insert("name".into(), json!(f.name));
    m.insert("width".into(), json!(f.width));
    m.insert(
        "direction".into(),
        json!(match f.direction {
            FieldDirection::ToDut => "to_dut",
            FieldDirection::FromDut => "from_dut",
        }),
    );
    m.insert("role".into(), json!(f.role.as_str()));
    if let Some(d) = f.default_value {
        m.insert("default".into(), json!(d));
    }
    if let Some(bins) = &f.cover_bins {
        m.insert(
            "cover_bins".into(),
            Value::Array(
                bins.iter()
                    .map(|b| match b.kind {
                        CoverBinKind::Value(v) => json!({"name": b.name, "kind": "value", "value": v}),
                        CoverBinKind::Range { lo, hi } => {
                            json!({"name": b.name, "kind": "range", "lo": lo, "hi": hi})
                        }
                        CoverBinKind::AutoWidth => json!({"name": b.name, "kind": "auto_width"}),
                    })
                    .collect(),
            ),
        );
    }
    Value::Object(m)
}

fn register(r: &RegisterDecl) -> Value {
    let mut m = Map::new();
    m.insert("name".into(), json!(r.name));
    m.insert("addr".into(), json!(hex(r.address)));
    m.insert("width".into(), json!(r.width));
    m.insert("access".into(), json!(r.access.as_str()));
    if !r.fields.is_empty() {
        m.insert(
            "fields".into(),
            Value::Array(
                r.fields
                    .iter()
                    .map(|f| {
                        let mut fm = Map::new();
                        fm.insert("name".into(), json!(f.name));
                        fm.insert("lsb".into(), json!(f.lsb));
                        fm.insert("msb".into(), json!(f.msb));
                        if let Some(d) = f.default {
                            fm.insert("default".into(), json!(d));
                        }
                        Value::Object(fm)
                    })
                    .collect(),
            ),
        );
    }
    Value::Object(m)
}

pub(super) fn to_json_string(bp: &Blueprint) -> String {
    let mut s = serde_json::to_string_pretty(&to_json_value(bp)).expect("blueprint serializes");
    s.push('\n');
    s
}
