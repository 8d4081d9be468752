// SPDX-License-Identifier: Apache-2.0

//! Document parsing and Blueprint validation.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::{Map, Value};

use super::filter::{apply_safety_filters, FilterLog};
use super::fix::{auto_fix_value, FixLog};
use super::resolve::{constraint_fate, drive_target, known_name, ConstraintFate, DriveTarget};
use super::{
    Constraint, DslConfig, DslDocument, DslError, DslSequence, DslStep, Relation, SweepField,
    TogglePattern, STEP_TYPES,
};
use crate::blueprint::{fits_width, is_identifier, Blueprint};
use crate::num::hex;
use crate::templates::bfm_spec;

/// Step types an LLM reaches for when it wants branching or looping.
const CONTROL_FLOW: &[&str] = &[
    "if", "else", "if_else", "while", "for", "foreach", "loop", "repeat", "branch",
    "conditional", "goto", "jump", "call", "fork", "parallel", "until", "break", "switch", "case",
];

/// Keys whose presence alone marks an HDL payload.
const CODE_KEYS: &[&str] = &[
    "code", "sv", "sv_code", "systemverilog", "verilog", "hdl", "raw", "raw_sv", "body", "uvm",
];

const CODE_MARKERS: &[&str] = &[
    "start_item", "finish_item", "endtask", "endclass", "endmodule", "@(posedge", "@(negedge",
    "`uvm", "$display", "always", "begin", "<=", "assign ",
];

/// Names the generated sequence body uses for its own locals.
pub(crate) const RESERVED_LOCALS: &[&str] = &["req", "rsp", "vif", "dsl_rdata", "dsl_iters"];

const SV_KEYWORDS: &[&str] = &[
    "begin", "end", "if", "else", "for", "while", "do", "int", "bit", "logic", "task", "function",
    "class", "module", "input", "output", "inout", "wire", "reg", "assign", "always", "initial",
    "fork", "join", "wait", "repeat", "forever", "return", "case", "endcase", "byte", "string",
    "virtual", "new", "this", "super", "null", "static", "const", "rand", "constraint", "with",
    "inside", "type", "typedef", "package", "import",
];

pub(crate) fn looks_like_code(key: &str, value: &Value) -> bool {
    if CODE_KEYS.contains(&key.to_ascii_lowercase().as_str()) {
        return true;
    }
    match value {
        Value::String(s) => CODE_MARKERS.iter().any(|m| s.contains(m)) && (s.contains(';') || s.contains('\n')),
        Value::Array(items) => items.iter().any(|v| looks_like_code("", v)),
        _ => false,
    }
}

pub(crate) fn allowed_step_keys(step_type: &str) -> &'static [&'static str] {
    match step_type {
        "register_write" => &["type", "addr", "value"],
        "register_read" => &["type", "addr", "store_as"],
        "poll" => &["type", "addr", "mask", "expected", "max_iters", "interval_cycles"],
        "randomize_send" => &["type", "constraints"],
        "delay" => &["type", "cycles"],
        "memory_write" => &["type", "bfm", "base_addr", "data"],
        "bfm_action" => &["type", "bfm", "action", "params"],
        "config_sweep" => &["type", "fields"],
        "value_sweep" => &["type", "field", "values"],
        "toggle_pattern" => &["type", "field", "pattern"],
        _ => &[],
    }
}

pub(crate) const SEQUENCE_KEYS: &[&str] = &["name", "description", "steps"];
pub(crate) const CONSTRAINT_KEYS: &[&str] = &["field", "op", "value", "values", "lo", "hi"];
pub(crate) const SWEEP_FIELD_KEYS: &[&str] = &["field", "values"];

pub(crate) fn is_control_flow(name: &str) -> bool {
    CONTROL_FLOW.contains(&name.to_ascii_lowercase().as_str())
}

pub(crate) fn load(text: &str) -> Result<Value, DslError> {
    serde_json::from_str(text).map_err(|e| DslError::JsonSyntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// The sequence objects of a document. Besides the canonical
/// `{"sequences": [...]}`, a bare array or a single sequence object is
/// accepted.
pub(crate) fn sequence_values(doc: &Value) -> Result<Vec<(String, &Value)>, DslError> {
    let items = match doc {
        Value::Object(map) if map.contains_key("sequences") => {
            if let Some(key) = map.keys().find(|k| *k != "sequences") {
                return Err(unknown_key("$", key, &map[key]));
            }
            match &map["sequences"] {
                Value::Array(items) => items
                    .iter()
                    .enumerate()
                    .map(|(i, v)| (format!("sequences[{i}]"), v))
                    .collect(),
                _ => return Err(DslError::schema("sequences", "expected an array")),
            }
        }
        Value::Object(map) if map.contains_key("steps") => vec![("$".to_string(), doc)],
        Value::Array(items) => items
            .iter()
            .enumerate()
            .map(|(i, v)| (format!("[{i}]"), v))
            .collect(),
        _ => {
            return Err(DslError::schema(
                "$",
                "expected {\"sequences\": [...]}, a sequence object or an array of sequences",
            ))
        }
    };
    Ok(items)
}

fn unknown_key(path: &str, key: &str, value: &Value) -> DslError {
    if looks_like_code(key, value) {
        DslError::CodePayload {
            path: path.to_string(),
            key: key.to_string(),
        }
    } else {
        DslError::UnknownKey {
            path: path.to_string(),
            key: key.to_string(),
        }
    }
}

fn check_keys(path: &str, map: &Map<String, Value>, allowed: &[&str], errors: &mut Vec<DslError>) {
    for (k, v) in map {
        if !allowed.contains(&k.as_str()) {
            errors.push(unknown_key(path, k, v));
        }
    }
}

fn object<'a>(path: &str, v: &'a Value) -> Result<&'a Map<String, Value>, DslError> {
    v.as_object()
        .ok_or_else(|| DslError::schema(path, "expected an object"))
}

fn required<'a>(path: &str, map: &'a Map<String, Value>, key: &str) -> Result<&'a Value, DslError> {
    map.get(key)
        .ok_or_else(|| DslError::schema(path, format!("missing `{key}`")))
}

fn as_uint(path: &str, v: &Value) -> Result<u64, DslError> {
    v.as_u64()
        .ok_or_else(|| DslError::schema(path, format!("expected an unsigned integer, found {v}")))
}

fn as_u32(path: &str, v: &Value) -> Result<u32, DslError> {
    let n = as_uint(path, v)?;
    u32::try_from(n).map_err(|_| DslError::schema(path, format!("{n} is out of range")))
}

fn as_uint_list(path: &str, v: &Value) -> Result<Vec<u64>, DslError> {
    match v {
        Value::Array(items) => items
            .iter()
            .enumerate()
            .map(|(i, x)| as_uint(&format!("{path}[{i}]"), x))
            .collect(),
        _ => Err(DslError::schema(path, "expected an array of unsigned integers")),
    }
}

fn as_ident(path: &str, v: &Value) -> Result<String, DslError> {
    match v.as_str() {
        Some(s) if is_identifier(s) => Ok(s.to_string()),
        Some(s) => Err(DslError::schema(path, format!("`{s}` is not an identifier"))),
        None => Err(DslError::schema(path, "expected a string")),
    }
}

fn uint_at(path: &str, map: &Map<String, Value>, key: &str) -> Result<u64, DslError> {
    as_uint(&format!("{path}.{key}"), required(path, map, key)?)
}

fn u32_at(path: &str, map: &Map<String, Value>, key: &str) -> Result<u32, DslError> {
    as_u32(&format!("{path}.{key}"), required(path, map, key)?)
}

fn ident_at(path: &str, map: &Map<String, Value>, key: &str) -> Result<String, DslError> {
    as_ident(&format!("{path}.{key}"), required(path, map, key)?)
}

fn list_at(path: &str, map: &Map<String, Value>, key: &str) -> Result<Vec<u64>, DslError> {
    as_uint_list(&format!("{path}.{key}"), required(path, map, key)?)
}

fn parse_constraint(path: &str, v: &Value) -> Result<Constraint, Vec<DslError>> {
    let map = object(path, v).map_err(|e| vec![e])?;
    let mut errors = Vec::new();
    check_keys(path, map, CONSTRAINT_KEYS, &mut errors);
    let field = ident_at(path, map, "field");
    let relation = match map.get("op").and_then(Value::as_str) {
        Some("eq") => uint_at(path, map, "value").map(|value| Relation::Eq { value }),
        Some("in_set") => list_at(path, map, "values").map(|values| Relation::InSet { values }),
        Some("in_range") => uint_at(path, map, "lo")
            .and_then(|lo| uint_at(path, map, "hi").map(|hi| Relation::InRange { lo, hi })),
        Some(other) => Err(DslError::schema(
            format!("{path}.op"),
            format!("`{other}` is not one of eq, in_set, in_range"),
        )),
        None => Err(DslError::schema(path, "missing `op`")),
    };
    match (field, relation) {
        (Ok(field), Ok(relation)) if errors.is_empty() => Ok(Constraint { field, relation }),
        (f, r) => {
            errors.extend(f.err());
            errors.extend(r.err());
            Err(errors)
        }
    }
}

fn parse_step(path: &str, v: &Value) -> Result<DslStep, Vec<DslError>> {
    let map = object(path, v).map_err(|e| vec![e])?;
    let ty = match map.get("type") {
        Some(Value::String(s)) => s.as_str(),
        Some(_) => return Err(vec![DslError::schema(format!("{path}.type"), "expected a string")]),
        None => return Err(vec![DslError::schema(path, "missing `type`")]),
    };
    if !STEP_TYPES.contains(&ty) {
        let name = ty.to_string();
        let path = path.to_string();
        return Err(vec![if is_control_flow(ty) {
            DslError::Expressiveness { path, name }
        } else {
            DslError::UnknownStepType { path, name }
        }]);
    }
    let mut errors = Vec::new();
    check_keys(path, map, allowed_step_keys(ty), &mut errors);
    let step = build_step(path, ty, map);
    match step {
        Ok(step) if errors.is_empty() => Ok(step),
        Ok(_) => Err(errors),
        Err(mut e) => {
            errors.append(&mut e);
            Err(errors)
        }
    }
}

fn build_step(path: &str, ty: &str, map: &Map<String, Value>) -> Result<DslStep, Vec<DslError>> {
    let one = |e: DslError| vec![e];
    let step = match ty {
        "register_write" => DslStep::RegisterWrite {
            addr: uint_at(path, map, "addr").map_err(one)?,
            value: uint_at(path, map, "value").map_err(one)?,
        },
        "register_read" => DslStep::RegisterRead {
            addr: uint_at(path, map, "addr").map_err(one)?,
            store_as: ident_at(path, map, "store_as").map_err(one)?,
        },
        "poll" => {
            let max_iters = match map.get("max_iters") {
                None | Some(Value::Null) => {
                    return Err(vec![DslError::UnboundedPoll {
                        path: path.to_string(),
                    }])
                }
                Some(v) => as_u32(&format!("{path}.max_iters"), v).map_err(one)?,
            };
            DslStep::Poll {
                addr: uint_at(path, map, "addr").map_err(one)?,
                mask: uint_at(path, map, "mask").map_err(one)?,
                expected: uint_at(path, map, "expected").map_err(one)?,
                max_iters,
                interval_cycles: u32_at(path, map, "interval_cycles").map_err(one)?,
            }
        }
        "randomize_send" => {
            let constraints = match map.get("constraints") {
                None => Vec::new(),
                Some(Value::Array(items)) => {
                    let mut out = Vec::new();
                    let mut errors = Vec::new();
                    for (i, c) in items.iter().enumerate() {
                        match parse_constraint(&format!("{path}.constraints[{i}]"), c) {
                            Ok(c) => out.push(c),
                            Err(mut e) => errors.append(&mut e),
                        }
                    }
                    if !errors.is_empty() {
                        return Err(errors);
                    }
                    out
                }
                Some(_) => {
                    return Err(vec![DslError::schema(
                        format!("{path}.constraints"),
                        "expected an array",
                    )])
                }
            };
            DslStep::RandomizeSend { constraints }
        }
        "delay" => DslStep::Delay {
            cycles: u32_at(path, map, "cycles").map_err(one)?,
        },
        "memory_write" => DslStep::MemoryWrite {
            bfm: ident_at(path, map, "bfm").map_err(one)?,
            base_addr: uint_at(path, map, "base_addr").map_err(one)?,
            data: list_at(path, map, "data").map_err(one)?,
        },
        "bfm_action" => {
            let params = match map.get("params") {
                None => BTreeMap::new(),
                Some(Value::Object(p)) => p
                    .iter()
                    .map(|(k, v)| Ok((k.clone(), as_uint(&format!("{path}.params.{k}"), v)?)))
                    .collect::<Result<_, DslError>>()
                    .map_err(one)?,
                Some(_) => {
                    return Err(vec![DslError::schema(
                        format!("{path}.params"),
                        "expected an object",
                    )])
                }
            };
            DslStep::BfmAction {
                bfm: ident_at(path, map, "bfm").map_err(one)?,
                action: ident_at(path, map, "action").map_err(one)?,
                params,
            }
        }
        "config_sweep" => {
            let items = match required(path, map, "fields").map_err(one)? {
                Value::Array(items) => items,
                _ => {
                    return Err(vec![DslError::schema(
                        format!("{path}.fields"),
                        "expected an array of {field, values}",
                    )])
                }
            };
            let mut fields = Vec::new();
            let mut errors = Vec::new();
            for (i, item) in items.iter().enumerate() {
                let p = format!("{path}.fields[{i}]");
                let parsed = object(&p, item).and_then(|m| {
                    check_keys(&p, m, SWEEP_FIELD_KEYS, &mut errors);
                    Ok(SweepField {
                        field: ident_at(&p, m, "field")?,
                        values: list_at(&p, m, "values")?,
                    })
                });
                match parsed {
                    Ok(f) => fields.push(f),
                    Err(e) => errors.push(e),
                }
            }
            if !errors.is_empty() {
                return Err(errors);
            }
            DslStep::ConfigSweep { fields }
        }
        "value_sweep" => DslStep::ValueSweep {
            field: ident_at(path, map, "field").map_err(one)?,
            values: list_at(path, map, "values").map_err(one)?,
        },
        "toggle_pattern" => {
            let p = format!("{path}.pattern");
            let name = required(path, map, "pattern")
                .map_err(one)?
                .as_str()
                .ok_or_else(|| vec![DslError::schema(&p, "expected a string")])?;
            DslStep::TogglePattern {
                field: ident_at(path, map, "field").map_err(one)?,
                pattern: TogglePattern::from_name(name).ok_or_else(|| {
                    vec![DslError::schema(
                        &p,
                        format!("`{name}` is not one of walking_one, walking_zero, alternating"),
                    )]
                })?,
            }
        }
        _ => unreachable!("step type checked by caller"),
    };
    Ok(step)
}

/// A sequence whose steps were parsed independently.
pub(crate) struct RawSequence {
    pub path: String,
    pub name: String,
    pub description: String,
    pub steps: Vec<(String, Result<DslStep, Vec<DslError>>)>,
    pub errors: Vec<DslError>,
}

pub(crate) fn parse_sequence(path: &str, v: &Value) -> RawSequence {
    let mut raw = RawSequence {
        path: path.to_string(),
        name: String::new(),
        description: String::new(),
        steps: Vec::new(),
        errors: Vec::new(),
    };
    let map = match object(path, v) {
        Ok(m) => m,
        Err(e) => {
            raw.errors.push(e);
            return raw;
        }
    };
    check_keys(path, map, SEQUENCE_KEYS, &mut raw.errors);
    match ident_at(path, map, "name") {
        Ok(n) => raw.name = n,
        Err(e) => raw.errors.push(e),
    }
    match map.get("description") {
        None | Some(Value::Null) => {}
        Some(Value::String(s)) => raw.description = s.clone(),
        Some(_) => raw
            .errors
            .push(DslError::schema(format!("{path}.description"), "expected a string")),
    }
    match map.get("steps") {
        Some(Value::Array(items)) if !items.is_empty() => {
            for (i, s) in items.iter().enumerate() {
                let p = format!("{path}.steps[{i}]");
                let parsed = parse_step(&p, s);
                raw.steps.push((p, parsed));
            }
        }
        Some(Value::Array(_)) => raw
            .errors
            .push(DslError::schema(format!("{path}.steps"), "a sequence needs at least one step")),
        Some(_) => raw
            .errors
            .push(DslError::schema(format!("{path}.steps"), "expected an array")),
        None => raw.errors.push(DslError::schema(path, "missing `steps`")),
    }
    raw
}

fn parse_raw(doc: &Value) -> Result<Vec<RawSequence>, DslError> {
    Ok(sequence_values(doc)?
        .into_iter()
        .map(|(p, v)| parse_sequence(&p, v))
        .collect())
}

/// Schema-level parse, no Blueprint involved.
pub fn parse_document(text: &str) -> Result<DslDocument, Vec<DslError>> {
    let doc = load(text).map_err(|e| vec![e])?;
    let raws = parse_raw(&doc).map_err(|e| vec![e])?;
    let mut errors = Vec::new();
    let mut sequences = Vec::new();
    for raw in raws {
        errors.extend(raw.errors);
        let mut steps = Vec::new();
        for (_, s) in raw.steps {
            match s {
                Ok(s) => steps.push(s),
                Err(mut e) => errors.append(&mut e),
            }
        }
        sequences.push(DslSequence {
            name: raw.name,
            description: raw.description,
            steps,
        });
    }
    if errors.is_empty() {
        Ok(DslDocument { sequences })
    } else {
        Err(errors)
    }
}

fn overflow(path: &str, field: &str, value: u64, width: u32, errors: &mut Vec<DslError>) {
    if !fits_width(value, width) {
        errors.push(DslError::ValueOverflow {
            path: path.to_string(),
            field: field.to_string(),
            value,
        });
    }
}

fn check_field_name(path: &str, bp: &Blueprint, name: &str, errors: &mut Vec<DslError>) -> bool {
    if known_name(bp, name) {
        true
    } else {
        errors.push(DslError::UnknownField {
            path: path.to_string(),
            name: name.to_string(),
        });
        false
    }
}

fn check_values(path: &str, bp: &Blueprint, field: &str, values: &[u64], errors: &mut Vec<DslError>) {
    if values.is_empty() {
        errors.push(DslError::invalid(path, format!("no values for `{field}`")));
    }
    if let Ok(t) = drive_target(bp, field) {
        for v in values {
            overflow(path, field, *v, t.width(), errors);
        }
    }
}

fn check_register(
    path: &str,
    bp: &Blueprint,
    addr: u64,
    write: bool,
    errors: &mut Vec<DslError>,
) -> Option<u32> {
    if !bp.protocol.is_bus() {
        errors.push(DslError::invalid(
            path,
            format!("register access needs a bus; protocol is {}", bp.protocol),
        ));
        return None;
    }
    let Some(reg) = bp.register_by_addr(addr) else {
        errors.push(DslError::UnknownRegister {
            path: path.to_string(),
            name: hex(addr),
        });
        return None;
    };
    let ok = if write {
        reg.access.writable()
    } else {
        reg.access.readable()
    };
    if !ok {
        errors.push(DslError::AccessViolation {
            path: path.to_string(),
            register: reg.name.clone(),
            access: reg.access.as_str().to_string(),
        });
    }
    Some(reg.width)
}

fn reg_name(bp: &Blueprint, addr: u64) -> String {
    bp.register_by_addr(addr)
        .map(|r| r.name.clone())
        .unwrap_or_else(|| hex(addr))
}

/// Blueprint-level checks for one parsed step.
pub(crate) fn check_step(path: &str, step: &DslStep, bp: &Blueprint, cfg: &DslConfig) -> Vec<DslError> {
    let mut errors = Vec::new();
    match step {
        DslStep::RegisterWrite { addr, value } => {
            if let Some(w) = check_register(path, bp, *addr, true, &mut errors) {
                overflow(path, &reg_name(bp, *addr), *value, w, &mut errors);
            }
        }
        DslStep::RegisterRead { addr, store_as } => {
            check_register(path, bp, *addr, false, &mut errors);
            let lower = store_as.to_ascii_lowercase();
            if bp.port(store_as).is_some()
                || RESERVED_LOCALS.contains(&store_as.as_str())
                || SV_KEYWORDS.contains(&lower.as_str())
                || store_as.starts_with("dsl_")
            {
                errors.push(DslError::invalid(
                    format!("{path}.store_as"),
                    format!("`{store_as}` clashes with a reserved or port name"),
                ));
            }
        }
        DslStep::Poll {
            addr,
            mask,
            expected,
            max_iters,
            interval_cycles,
        } => {
            if let Some(w) = check_register(path, bp, *addr, false, &mut errors) {
                let name = reg_name(bp, *addr);
                overflow(path, &name, *mask, w, &mut errors);
                overflow(path, &name, *expected, w, &mut errors);
            }
            if *max_iters == 0 || *max_iters > cfg.max_poll_iters {
                errors.push(DslError::UnboundedPoll {
                    path: path.to_string(),
                });
            }
            if *interval_cycles == 0 {
                errors.push(DslError::invalid(path, "interval_cycles must be at least 1"));
            }
            if expected & !mask != 0 {
                errors.push(DslError::invalid(
                    path,
                    format!("expected {} has bits outside mask {}", hex(*expected), hex(*mask)),
                ));
            }
        }
        DslStep::RandomizeSend { constraints } => {
            for (i, c) in constraints.iter().enumerate() {
                let p = format!("{path}.constraints[{i}]");
                if !check_field_name(&p, bp, &c.field, &mut errors) {
                    continue;
                }
                let width = match constraint_fate(bp, &c.field) {
                    ConstraintFate::Keep { width } => Some(width),
                    _ => None,
                };
                match &c.relation {
                    Relation::Eq { value } => {
                        if let Some(w) = width {
                            overflow(&p, &c.field, *value, w, &mut errors);
                        }
                    }
                    Relation::InSet { values } => {
                        if values.is_empty() {
                            errors.push(DslError::invalid(&p, "in_set needs at least one value"));
                        }
                        if let Some(w) = width {
                            for v in values {
                                overflow(&p, &c.field, *v, w, &mut errors);
                            }
                        }
                    }
                    Relation::InRange { lo, hi } => {
                        if lo > hi {
                            errors.push(DslError::invalid(&p, format!("empty range [{lo}:{hi}]")));
                        }
                        if let Some(w) = width {
                            overflow(&p, &c.field, *hi, w, &mut errors);
                        }
                    }
                }
            }
        }
        DslStep::Delay { cycles } => {
            if *cycles == 0 {
                errors.push(DslError::invalid(path, "delay needs at least one cycle"));
            }
        }
        DslStep::MemoryWrite { bfm, base_addr, data } => match bp.bfm(bfm) {
            None => errors.push(DslError::UnknownBfm {
                path: path.to_string(),
                name: bfm.clone(),
            }),
            Some(decl) => {
                let spec = bfm_spec(decl.kind);
                if !spec.backdoor || spec.action("preload").is_none() {
                    errors.push(DslError::invalid(
                        path,
                        format!("BFM `{bfm}` ({}) has no backdoor", decl.kind.as_str()),
                    ));
                }
                if data.is_empty() {
                    errors.push(DslError::invalid(path, "memory_write needs data"));
                }
                for v in data {
                    overflow(path, bfm, *v, spec.data_width, &mut errors);
                }
                let last = base_addr.checked_add(data.len() as u64);
                if last.is_none_or(|end| end > 1u64 << 32) {
                    errors.push(DslError::invalid(path, "address range exceeds 32 bits"));
                }
            }
        },
        DslStep::BfmAction { bfm, action, params } => match bp.bfm(bfm) {
            None => errors.push(DslError::UnknownBfm {
                path: path.to_string(),
                name: bfm.clone(),
            }),
            Some(decl) => match bfm_spec(decl.kind).action(action) {
                None => errors.push(DslError::UnknownAction {
                    path: path.to_string(),
                    bfm: bfm.clone(),
                    action: action.clone(),
                }),
                Some(a) => {
                    for p in &a.params {
                        match params.get(p) {
                            None => errors.push(DslError::invalid(
                                path,
                                format!("`{action}` needs parameter `{p}`"),
                            )),
                            Some(v) => overflow(path, p, *v, 32, &mut errors),
                        }
                    }
                    for k in params.keys().filter(|k| !a.params.contains(k)) {
                        errors.push(DslError::UnknownKey {
                            path: format!("{path}.params"),
                            key: k.clone(),
                        });
                    }
                }
            },
        },
        DslStep::ConfigSweep { fields } => {
            if fields.is_empty() {
                errors.push(DslError::invalid(path, "config_sweep needs at least one field"));
            }
            let mut seen = BTreeSet::new();
            let mut targets = Vec::new();
            let mut total: usize = 1;
            for f in fields {
                if !seen.insert(f.field.as_str()) {
                    errors.push(DslError::invalid(path, format!("`{}` swept twice", f.field)));
                }
                if check_field_name(path, bp, &f.field, &mut errors) {
                    check_values(path, bp, &f.field, &f.values, &mut errors);
                    targets.push(drive_target(bp, &f.field));
                }
                total = total.saturating_mul(f.values.len());
            }
            if total > cfg.max_sweep_transactions {
                errors.push(DslError::invalid(
                    path,
                    format!("sweep expands to {total} transactions, cap is {}", cfg.max_sweep_transactions),
                ));
            }
            if targets.iter().all(Result::is_ok) && !shares_transaction(&targets) {
                errors.push(DslError::invalid(
                    path,
                    "config_sweep fields must land in one transaction: all item fields, or fields of one register",
                ));
            }
        }
        DslStep::ValueSweep { field, values } => {
            if check_field_name(path, bp, field, &mut errors) {
                check_values(path, bp, field, values, &mut errors);
            }
            if values.len() > cfg.max_sweep_transactions {
                errors.push(DslError::invalid(path, "too many sweep values"));
            }
        }
        DslStep::TogglePattern { field, .. } => {
            check_field_name(path, bp, field, &mut errors);
        }
    }
    errors
}

pub(crate) fn shares_transaction(targets: &[Result<DriveTarget<'_>, super::resolve::Refusal>]) -> bool {
    let mut register = None;
    let mut item = false;
    for t in targets.iter().flatten() {
        match t {
            DriveTarget::Item { .. } => item = true,
            DriveTarget::Register { register: r, .. } => match register {
                None => register = Some(r.address),
                Some(a) if a == r.address => {}
                Some(_) => return false,
            },
        }
    }
    !(item && register.is_some())
}

/// Full validation with default limits.
pub fn validate(text: &str, bp: &Blueprint) -> Result<Vec<DslSequence>, Vec<DslError>> {
    validate_with(text, bp, &DslConfig::default())
}

pub fn validate_with(
    text: &str,
    bp: &Blueprint,
    cfg: &DslConfig,
) -> Result<Vec<DslSequence>, Vec<DslError>> {
    let doc = load(text).map_err(|e| vec![e])?;
    let raws = parse_raw(&doc).map_err(|e| vec![e])?;
    let mut errors = Vec::new();
    let mut names = BTreeSet::new();
    let mut out = Vec::new();
    for raw in raws {
        errors.extend(raw.errors);
        if !raw.name.is_empty() && !names.insert(raw.name.clone()) {
            errors.push(DslError::DuplicateName(raw.name.clone()));
        }
        let mut steps = Vec::new();
        for (p, s) in raw.steps {
            match s {
                Ok(step) => {
                    let mut e = check_step(&p, &step, bp, cfg);
                    if e.is_empty() {
                        steps.push(step);
                    } else {
                        errors.append(&mut e);
                    }
                }
                Err(mut e) => errors.append(&mut e),
            }
        }
        out.push(DslSequence {
            name: raw.name,
            description: raw.description,
            steps,
        });
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(errors)
    }
}

/// Result of the lenient path used by the refinement loop.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Screened {
    pub fix_log: FixLog,
    /// Accepted, filtered and uniquely named sequences.
    pub sequences: Vec<DslSequence>,
    pub filter_logs: Vec<FilterLog>,
    /// Why steps or sequences were left out.
    pub errors: Vec<DslError>,
    /// (original name, name used) for sequences renamed to stay unique.
    pub renamed: Vec<(String, String)>,
}

/// Repairs, validates and filters a document step by step, keeping every
/// step that survives. Sequences left with no steps are dropped. Names that
/// collide with `existing` get `_<suffix>` (then `_<suffix>_2`, ...).
pub fn screen(
    text: &str,
    bp: &Blueprint,
    cfg: &DslConfig,
    existing: &BTreeSet<String>,
    suffix: &str,
) -> Screened {
    let mut out = Screened::default();
    let mut doc = match load(text) {
        Ok(v) => v,
        Err(e) => {
            out.errors.push(e);
            return out;
        }
    };
    out.fix_log = auto_fix_value(&mut doc, bp, cfg);
    let raws = match parse_raw(&doc) {
        Ok(r) => r,
        Err(e) => {
            out.errors.push(e);
            return out;
        }
    };
    let mut taken = existing.clone();
    for raw in raws {
        if !raw.errors.is_empty() {
            out.errors.extend(raw.errors);
            continue;
        }
        let mut steps = Vec::new();
        for (p, s) in raw.steps {
            match s.and_then(|step| {
                let e = check_step(&p, &step, bp, cfg);
                if e.is_empty() {
                    Ok(step)
                } else {
                    Err(e)
                }
            }) {
                Ok(step) => steps.push(step),
                Err(mut e) => out.errors.append(&mut e),
            }
        }
        let mut name = raw.name.clone();
        if taken.contains(&name) {
            let base = format!("{}_{suffix}", raw.name);
            name = base.clone();
            let mut n = 2;
            while taken.contains(&name) {
                name = format!("{base}_{n}");
                n += 1;
            }
            out.renamed.push((raw.name.clone(), name.clone()));
        }
        let seq = DslSequence {
            name,
            description: raw.description,
            steps,
        };
        let (seq, log) = apply_safety_filters(&seq, bp);
        out.filter_logs.push(log);
        if seq.steps.is_empty() {
            out.errors.push(DslError::invalid(&raw.path, "no step survived validation"));
            continue;
        }
        taken.insert(seq.name.clone());
        out.sequences.push(seq);
    }
    out
}
