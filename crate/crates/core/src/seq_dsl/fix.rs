// SPDX-License-Identifier: Apache-2.0

//! Best-effort repair of LLM-written DSL documents.
//!
//! Rules run in a fixed order: document shape, sequence names, key and
//! step-type aliases, register names used as addresses, numeric strings,
//! poll defaults, width masking, unknown keys. Anything still wrong is left
//! for [`super::validate`] to report.

use serde::Serialize;
use serde_json::{Map, Value};

use super::parse::{
    allowed_step_keys, looks_like_code, CONSTRAINT_KEYS, SEQUENCE_KEYS, SWEEP_FIELD_KEYS,
};
use super::resolve::{constraint_fate, drive_target, ConstraintFate};
use super::{DslConfig, STEP_TYPES};
use crate::blueprint::{is_identifier, mask, Blueprint};
use crate::num::parse_uint_literal;
use crate::templates::bfm_spec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FixRule {
    DocumentShape,
    NameSanitized,
    KeyAlias,
    StepAlias,
    RegisterName,
    NumericString,
    PollDefaultBound,
    PollBoundClamped,
    PollDefaultInterval,
    ValueMasked,
    UnknownKeyDropped,
}

impl FixRule {
    pub fn as_str(self) -> &'static str {
        match self {
            FixRule::DocumentShape => "document_shape",
            FixRule::NameSanitized => "name_sanitized",
            FixRule::KeyAlias => "key_alias",
            FixRule::StepAlias => "step_alias",
            FixRule::RegisterName => "register_name",
            FixRule::NumericString => "numeric_string",
            FixRule::PollDefaultBound => "poll_default_bound",
            FixRule::PollBoundClamped => "poll_bound_clamped",
            FixRule::PollDefaultInterval => "poll_default_interval",
            FixRule::ValueMasked => "value_masked",
            FixRule::UnknownKeyDropped => "unknown_key_dropped",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FixEntry {
    pub sequence: Option<usize>,
    pub step: Option<usize>,
    pub rule: FixRule,
    /// JSON path of the repaired value.
    pub path: String,
    pub before: String,
    pub after: String,
}

/// Every repair made, in application order. Empty iff nothing changed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct FixLog {
    pub entries: Vec<FixEntry>,
}

impl FixLog {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn count(&self, rule: FixRule) -> usize {
        self.entries.iter().filter(|e| e.rule == rule).count()
    }
}

/// Repairs `dsl_json`. Text that is not JSON comes back untouched with an
/// empty log; an already-canonical document comes back byte-identical.
pub fn auto_fix(dsl_json: &str, bp: &Blueprint) -> (String, FixLog) {
    auto_fix_with(dsl_json, bp, &DslConfig::default())
}

pub fn auto_fix_with(dsl_json: &str, bp: &Blueprint, cfg: &DslConfig) -> (String, FixLog) {
    let Ok(mut doc) = serde_json::from_str::<Value>(dsl_json) else {
        return (dsl_json.to_string(), FixLog::default());
    };
    let log = auto_fix_value(&mut doc, bp, cfg);
    if log.is_empty() {
        (dsl_json.to_string(), log)
    } else {
        let text = serde_json::to_string_pretty(&doc).expect("JSON values serialize");
        (text, log)
    }
}

struct Fixer<'a> {
    bp: &'a Blueprint,
    cfg: &'a DslConfig,
    log: FixLog,
    sequence: Option<usize>,
    step: Option<usize>,
}

impl Fixer<'_> {
    fn note(&mut self, rule: FixRule, path: &str, before: &Value, after: &Value) {
        self.log.entries.push(FixEntry {
            sequence: self.sequence,
            step: self.step,
            rule,
            path: path.to_string(),
            before: before.to_string(),
            after: after.to_string(),
        });
    }

    /// Renames `from` to `to` when only `from` is present.
    fn rename_key(&mut self, path: &str, map: &mut Map<String, Value>, from: &str, to: &str) {
        if map.contains_key(to) || !map.contains_key(from) {
            return;
        }
        let v = map.shift_remove(from).unwrap();
        self.note(
            FixRule::KeyAlias,
            path,
            &Value::String(from.into()),
            &Value::String(to.into()),
        );
        map.insert(to.to_string(), v);
    }

    fn coerce(&mut self, path: &str, v: &mut Value) {
        match v {
            Value::Array(items) => {
                for (i, x) in items.iter_mut().enumerate() {
                    self.coerce(&format!("{path}[{i}]"), x);
                }
            }
            Value::String(s) => {
                if let Some(n) = parse_uint_literal(s) {
                    let new = Value::from(n);
                    self.note(FixRule::NumericString, path, v, &new);
                    *v = new;
                }
            }
            Value::Number(n) if n.as_u64().is_none() => {
                if let Some(f) = n.as_f64().filter(|f| f.fract() == 0.0 && *f >= 0.0 && *f < u64::MAX as f64) {
                    let new = Value::from(f as u64);
                    self.note(FixRule::NumericString, path, v, &new);
                    *v = new;
                }
            }
            _ => {}
        }
    }

    fn coerce_key(&mut self, path: &str, map: &mut Map<String, Value>, key: &str) {
        if let Some(v) = map.get_mut(key) {
            self.coerce(&format!("{path}.{key}"), v);
        }
    }

    fn mask_value(&mut self, path: &str, v: &mut Value, width: u32) {
        match v {
            Value::Array(items) => {
                for (i, x) in items.iter_mut().enumerate() {
                    self.mask_value(&format!("{path}[{i}]"), x, width);
                }
            }
            Value::Number(_) => {
                if let Some(n) = v.as_u64().filter(|n| n & !mask(width) != 0) {
                    let new = Value::from(n & mask(width));
                    self.note(FixRule::ValueMasked, path, v, &new);
                    *v = new;
                }
            }
            _ => {}
        }
    }

    fn mask_key(&mut self, path: &str, map: &mut Map<String, Value>, key: &str, width: u32) {
        if let Some(v) = map.get_mut(key) {
            self.mask_value(&format!("{path}.{key}"), v, width);
        }
    }

    fn drop_unknown(&mut self, path: &str, map: &mut Map<String, Value>, allowed: &[&str]) {
        let doomed: Vec<String> = map
            .iter()
            .filter(|(k, v)| !allowed.contains(&k.as_str()) && !looks_like_code(k, v))
            .map(|(k, _)| k.clone())
            .collect();
        for k in doomed {
            let v = map.shift_remove(&k).unwrap();
            self.note(FixRule::UnknownKeyDropped, &format!("{path}.{k}"), &v, &Value::Null);
        }
    }
}

/// Canonical step type for a loosely spelled one.
pub(crate) fn step_alias(name: &str) -> Option<&'static str> {
    let key: String = name
        .chars()
        .filter(|c| !matches!(c, '_' | '-' | ' ' | '.'))
        .collect::<String>()
        .to_ascii_lowercase();
    let canonical = match key.as_str() {
        "registerwrite" | "regwrite" | "regwr" | "writereg" | "writeregister" | "write" | "wr"
        | "csrwrite" | "busywrite" => "register_write",
        "registerread" | "regread" | "regrd" | "readreg" | "readregister" | "read" | "rd"
        | "csrread" | "busread" => "register_read",
        "poll" | "pollreg" | "pollregister" | "regpoll" | "waitfor" | "pollread" => "poll",
        "randomizesend" | "randomize" | "random" | "randsend" | "sendrandom" | "crv" | "randomsend"
        | "randomtransaction" => "randomize_send",
        "delay" | "wait" | "waitcycles" | "idle" | "sleep" | "delaycycles" => "delay",
        "memorywrite" | "memwrite" | "memwr" | "backdoorwrite" | "memload" | "memoryload"
        | "bulkwrite" => "memory_write",
        "bfmaction" | "bfm" | "bfmcall" | "bfmtask" | "callbfm" => "bfm_action",
        "configsweep" | "sweepconfig" | "cartesiansweep" | "cartesian" | "configurationsweep" => {
            "config_sweep"
        }
        "valuesweep" | "sweep" | "sweepvalues" | "fieldsweep" | "valuessweep" => "value_sweep",
        "togglepattern" | "toggle" | "bittoggle" | "walking" | "togglebits" => "toggle_pattern",
        _ => return None,
    };
    Some(canonical)
}

fn key_aliases(step_type: &str) -> &'static [(&'static str, &'static str)] {
    match step_type {
        "register_write" => &[("address", "addr"), ("reg", "addr"), ("register", "addr"), ("data", "value"), ("val", "value"), ("wdata", "value")],
        "register_read" => &[("address", "addr"), ("reg", "addr"), ("register", "addr"), ("var", "store_as"), ("store", "store_as"), ("dest", "store_as"), ("variable", "store_as"), ("into", "store_as")],
        "poll" => &[
            ("address", "addr"),
            ("reg", "addr"),
            ("register", "addr"),
            ("bitmask", "mask"),
            ("expect", "expected"),
            ("value", "expected"),
            ("max_iterations", "max_iters"),
            ("max_tries", "max_iters"),
            ("max_polls", "max_iters"),
            ("timeout", "max_iters"),
            ("iterations", "max_iters"),
            ("interval", "interval_cycles"),
            ("delay", "interval_cycles"),
            ("interval_cycle", "interval_cycles"),
        ],
        "randomize_send" => &[("constraint", "constraints")],
        "delay" => &[("cycle", "cycles"), ("n", "cycles"), ("clocks", "cycles"), ("wait_cycles", "cycles"), ("count", "cycles")],
        "memory_write" => &[("instance", "bfm"), ("target", "bfm"), ("addr", "base_addr"), ("base", "base_addr"), ("address", "base_addr"), ("words", "data"), ("values", "data")],
        "bfm_action" => &[("instance", "bfm"), ("target", "bfm"), ("task", "action"), ("name", "action"), ("args", "params"), ("arguments", "params")],
        "config_sweep" => &[("sweep", "fields"), ("field", "fields")],
        "value_sweep" => &[("signal", "field"), ("name", "field"), ("value", "values")],
        "toggle_pattern" => &[("signal", "field"), ("name", "field"), ("kind", "pattern"), ("mode", "pattern")],
        _ => &[],
    }
}

fn op_alias(op: &str) -> Option<&'static str> {
    Some(match op.to_ascii_lowercase().as_str() {
        "eq" | "==" | "=" | "equals" | "equal" | "is" => "eq",
        "in_set" | "in" | "inside" | "set" | "one_of" | "oneof" => "in_set",
        "in_range" | "range" | "between" | "inrange" => "in_range",
        _ => return None,
    })
}

fn sanitize_name(name: &str, index: usize) -> String {
    let mut out: String = name
        .trim()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c.to_ascii_lowercase() } else { '_' })
        .collect();
    while out.contains("__") {
        out = out.replace("__", "_");
    }
    let out = out.trim_matches('_').to_string();
    if out.is_empty() {
        format!("seq_{index}")
    } else if out.starts_with(|c: char| c.is_ascii_digit()) {
        format!("seq_{out}")
    } else {
        out
    }
}

/// In-place variant of [`auto_fix`].
pub fn auto_fix_value(doc: &mut Value, bp: &Blueprint, cfg: &DslConfig) -> FixLog {
    let mut fx = Fixer {
        bp,
        cfg,
        log: FixLog::default(),
        sequence: None,
        step: None,
    };

    let wrap = match doc {
        Value::Array(_) => true,
        Value::Object(m) => !m.contains_key("sequences") && m.contains_key("steps"),
        _ => false,
    };
    if wrap {
        let inner = doc.take();
        let items = match inner {
            Value::Array(items) => items,
            single => vec![single],
        };
        let new = serde_json::json!({ "sequences": items });
        fx.note(FixRule::DocumentShape, "$", &Value::Null, &Value::String("{\"sequences\": [...]}".into()));
        *doc = new;
    }
    let Some(root) = doc.as_object_mut() else {
        return fx.log;
    };
    fx.drop_unknown("$", root, &["sequences"]);
    let Some(Value::Array(seqs)) = root.get_mut("sequences") else {
        return fx.log;
    };
    for (si, seq) in seqs.iter_mut().enumerate() {
        fx.sequence = Some(si);
        fx.step = None;
        let path = format!("sequences[{si}]");
        let Some(map) = seq.as_object_mut() else {
            continue;
        };
        fix_name(&mut fx, &path, map, si);
        if let Some(Value::Array(steps)) = map.get_mut("steps") {
            for (ti, step) in steps.iter_mut().enumerate() {
                fx.step = Some(ti);
                if let Some(m) = step.as_object_mut() {
                    fix_step(&mut fx, &format!("{path}.steps[{ti}]"), m);
                }
            }
        }
        fx.step = None;
        fx.drop_unknown(&path, map, SEQUENCE_KEYS);
    }
    fx.log
}

fn fix_name(fx: &mut Fixer<'_>, path: &str, map: &mut Map<String, Value>, index: usize) {
    for alias in ["sequence_name", "seq_name", "title", "id"] {
        fx.rename_key(path, map, alias, "name");
    }
    let current = map.get("name").cloned().unwrap_or(Value::Null);
    let fixed = match &current {
        Value::String(s) if is_identifier(s) => return,
        Value::String(s) => sanitize_name(s, index),
        _ => format!("seq_{index}"),
    };
    let new = Value::String(fixed);
    fx.note(FixRule::NameSanitized, &format!("{path}.name"), &current, &new);
    map.insert("name".into(), new);
}

fn fix_step(fx: &mut Fixer<'_>, path: &str, map: &mut Map<String, Value>) {
    // 1. aliases
    for alias in ["step", "kind", "step_type", "action_type", "op"] {
        if !map.contains_key("type") && map.get(alias).is_some_and(Value::is_string) {
            fx.rename_key(path, map, alias, "type");
        }
    }
    let Some(Value::String(ty)) = map.get("type").cloned() else {
        return;
    };
    let ty = if STEP_TYPES.contains(&ty.as_str()) {
        ty
    } else if let Some(canonical) = step_alias(&ty) {
        let new = Value::String(canonical.into());
        fx.note(FixRule::StepAlias, &format!("{path}.type"), &Value::String(ty.clone()), &new);
        map.insert("type".into(), new);
        canonical.to_string()
    } else {
        return;
    };
    for (from, to) in key_aliases(&ty) {
        fx.rename_key(path, map, from, to);
    }
    normalize_shapes(fx, path, &ty, map);

    // 2. register names as addresses
    for key in ["addr"] {
        if let Some(Value::String(s)) = map.get(key) {
            if parse_uint_literal(s).is_none() {
                if let Some(reg) = fx.bp.register(s.trim()) {
                    let new = Value::from(reg.address);
                    fx.note(FixRule::RegisterName, &format!("{path}.{key}"), &Value::String(s.clone()), &new);
                    map.insert(key.into(), new);
                }
            }
        }
    }

    // 3. numeric strings
    for key in ["addr", "value", "mask", "expected", "max_iters", "interval_cycles", "cycles", "base_addr", "data", "values"] {
        fx.coerce_key(path, map, key);
    }
    if let Some(Value::Object(params)) = map.get_mut("params") {
        let keys: Vec<String> = params.keys().cloned().collect();
        for k in keys {
            fx.coerce_key(&format!("{path}.params"), params, &k);
        }
    }
    if let Some(Value::Array(cs)) = map.get_mut("constraints") {
        for (i, c) in cs.iter_mut().enumerate() {
            if let Some(cm) = c.as_object_mut() {
                let p = format!("{path}.constraints[{i}]");
                for k in ["value", "values", "lo", "hi"] {
                    fx.coerce_key(&p, cm, k);
                }
            }
        }
    }
    if let Some(Value::Array(fs)) = map.get_mut("fields") {
        for (i, f) in fs.iter_mut().enumerate() {
            if let Some(fm) = f.as_object_mut() {
                fx.coerce_key(&format!("{path}.fields[{i}]"), fm, "values");
            }
        }
    }

    // 4. poll defaults
    if ty == "poll" {
        let bound = map.get("max_iters").and_then(Value::as_u64);
        match bound {
            Some(n) if n > u64::from(fx.cfg.max_poll_iters) => {
                let new = Value::from(fx.cfg.max_poll_iters);
                fx.note(FixRule::PollBoundClamped, &format!("{path}.max_iters"), &Value::from(n), &new);
                map.insert("max_iters".into(), new);
            }
            Some(n) if n > 0 => {}
            _ if map.get("max_iters").is_some_and(|v| !v.is_null() && v.as_u64().is_none()) => {}
            _ => {
                let before = map.get("max_iters").cloned().unwrap_or(Value::Null);
                let new = Value::from(fx.cfg.default_poll_iters);
                fx.note(FixRule::PollDefaultBound, &format!("{path}.max_iters"), &before, &new);
                map.insert("max_iters".into(), new);
            }
        }
        let interval = map.get("interval_cycles").cloned().unwrap_or(Value::Null);
        if interval.is_null() || interval.as_u64() == Some(0) {
            let new = Value::from(1u64);
            fx.note(FixRule::PollDefaultInterval, &format!("{path}.interval_cycles"), &interval, &new);
            map.insert("interval_cycles".into(), new);
        }
    }

    // 5. widths
    mask_step(fx, path, &ty, map);

    // 6. unknown keys
    fx.drop_unknown(path, map, allowed_step_keys(&ty));
    if let Some(Value::Array(cs)) = map.get_mut("constraints") {
        for (i, c) in cs.iter_mut().enumerate() {
            if let Some(cm) = c.as_object_mut() {
                fx.drop_unknown(&format!("{path}.constraints[{i}]"), cm, CONSTRAINT_KEYS);
            }
        }
    }
    if let Some(Value::Array(fs)) = map.get_mut("fields") {
        for (i, f) in fs.iter_mut().enumerate() {
            if let Some(fm) = f.as_object_mut() {
                fx.drop_unknown(&format!("{path}.fields[{i}]"), fm, SWEEP_FIELD_KEYS);
            }
        }
    }
}

/// Alternative spellings of nested structures.
fn normalize_shapes(fx: &mut Fixer<'_>, path: &str, ty: &str, map: &mut Map<String, Value>) {
    // config_sweep fields as {"a": [..], "b": [..]}
    if ty == "config_sweep" {
        if let Some(Value::Object(fields)) = map.get("fields") {
            let before = Value::Object(fields.clone());
            let list: Vec<Value> = fields
                .iter()
                .map(|(k, v)| serde_json::json!({"field": k, "values": v}))
                .collect();
            let after = Value::Array(list);
            fx.note(FixRule::KeyAlias, &format!("{path}.fields"), &before, &after);
            map.insert("fields".into(), after);
        }
    }
    if ty == "randomize_send" {
        if let Some(Value::Array(cs)) = map.get_mut("constraints") {
            for (i, c) in cs.iter_mut().enumerate() {
                let Some(cm) = c.as_object_mut() else { continue };
                let p = format!("{path}.constraints[{i}]");
                for alias in ["relation", "operator", "kind", "type"] {
                    fx.rename_key(&p, cm, alias, "op");
                }
                for alias in ["name", "signal"] {
                    fx.rename_key(&p, cm, alias, "field");
                }
                if let Some(Value::String(op)) = cm.get("op").cloned() {
                    if let Some(canonical) = op_alias(&op).filter(|c| *c != op) {
                        let new = Value::String(canonical.into());
                        fx.note(FixRule::KeyAlias, &format!("{p}.op"), &Value::String(op), &new);
                        cm.insert("op".into(), new);
                    }
                }
                match cm.get("op").and_then(Value::as_str) {
                    Some("eq") => fx.rename_key(&p, cm, "operand", "value"),
                    Some("in_set") => {
                        fx.rename_key(&p, cm, "operand", "values");
                        fx.rename_key(&p, cm, "value", "values");
                    }
                    Some("in_range") => {
                        fx.rename_key(&p, cm, "min", "lo");
                        fx.rename_key(&p, cm, "max", "hi");
                        if let Some(Value::Array(r)) = cm.get("operand").or(cm.get("range")).cloned() {
                            if r.len() == 2 && !cm.contains_key("lo") && !cm.contains_key("hi") {
                                let key = if cm.contains_key("operand") { "operand" } else { "range" };
                                let before = cm.shift_remove(key).unwrap();
                                cm.insert("lo".into(), r[0].clone());
                                cm.insert("hi".into(), r[1].clone());
                                fx.note(FixRule::KeyAlias, &p, &before, &Value::Array(r));
                            }
                        }
                    }
                    _ => {}
                }
            }
        }
    }
}

fn mask_step(fx: &mut Fixer<'_>, path: &str, ty: &str, map: &mut Map<String, Value>) {
    let bp = fx.bp;
    let reg_width = map
        .get("addr")
        .and_then(Value::as_u64)
        .and_then(|a| bp.register_by_addr(a))
        .map(|r| r.width);
    match ty {
        "register_write" => {
            if let Some(w) = reg_width {
                fx.mask_key(path, map, "value", w);
            }
        }
        "poll" => {
            if let Some(w) = reg_width {
                fx.mask_key(path, map, "mask", w);
                fx.mask_key(path, map, "expected", w);
            }
        }
        "value_sweep" => {
            let width = map
                .get("field")
                .and_then(Value::as_str)
                .and_then(|f| drive_target(bp, f).ok())
                .map(|t| t.width());
            if let Some(w) = width {
                fx.mask_key(path, map, "values", w);
            }
        }
        "config_sweep" => {
            if let Some(Value::Array(fs)) = map.get_mut("fields") {
                for (i, f) in fs.iter_mut().enumerate() {
                    let Some(fm) = f.as_object_mut() else { continue };
                    let width = fm
                        .get("field")
                        .and_then(Value::as_str)
                        .and_then(|n| drive_target(bp, n).ok())
                        .map(|t| t.width());
                    if let Some(w) = width {
                        fx.mask_key(&format!("{path}.fields[{i}]"), fm, "values", w);
                    }
                }
            }
        }
        "randomize_send" => {
            if let Some(Value::Array(cs)) = map.get_mut("constraints") {
                for (i, c) in cs.iter_mut().enumerate() {
                    let Some(cm) = c.as_object_mut() else { continue };
                    let fate = cm
                        .get("field")
                        .and_then(Value::as_str)
                        .map(|n| constraint_fate(bp, n));
                    if let Some(ConstraintFate::Keep { width }) = fate {
                        let p = format!("{path}.constraints[{i}]");
                        fx.mask_key(&p, cm, "value", width);
                        fx.mask_key(&p, cm, "values", width);
                        clamp_range(fx, &p, cm, width);
                    }
                }
            }
        }
        "memory_write" => {
            let width = map
                .get("bfm")
                .and_then(Value::as_str)
                .and_then(|b| bp.bfm(b))
                .map(|d| bfm_spec(d.kind).data_width);
            if let Some(w) = width {
                fx.mask_key(path, map, "data", w);
            }
        }
        _ => {}
    }
}

/// Range bounds saturate instead of wrapping, so `[0:300]` on 8 bits
/// becomes `[0:255]`.
fn clamp_range(fx: &mut Fixer<'_>, path: &str, map: &mut Map<String, Value>, width: u32) {
    for key in ["lo", "hi"] {
        if let Some(n) = map.get(key).and_then(Value::as_u64).filter(|n| *n > mask(width)) {
            let new = Value::from(mask(width));
            fx.note(FixRule::ValueMasked, &format!("{path}.{key}"), &Value::from(n), &new);
            map.insert(key.into(), new);
        }
    }
}
