// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet};

use serde_json::{Map, Value};

use super::classify::{classify_ports, ClassifierConfig};
use super::*;
use crate::num::parse_uint_literal;
use crate::templates::bfm_spec;

/// Parses and validates a Blueprint document with the default lexicons.
pub fn parse_blueprint(json_text: &str) -> Result<Blueprint, Vec<BlueprintError>> {
    parse_blueprint_with(json_text, &ClassifierConfig::default())
}

pub fn parse_blueprint_with(
    json_text: &str,
    classifier: &ClassifierConfig,
) -> Result<Blueprint, Vec<BlueprintError>> {
    let value: Value = serde_json::from_str(json_text).map_err(|e| {
        vec![BlueprintError::JsonSyntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }]
    })?;
    let mut walker = Walker::default();
    let draft = walker.blueprint(&value);
    if !walker.errors.is_empty() {
        return Err(walker.errors);
    }
    let draft = draft.expect("structural walk without errors yields a draft");
    finish(draft, classifier)
}

fn describe(v: &Value) -> String {
    match v {
        Value::Null => "null".into(),
        Value::Bool(b) => format!("boolean {b}"),
        Value::Number(n) => format!("number {n}"),
        Value::String(s) => format!("string {s:?}"),
        Value::Array(_) => "array".into(),
        Value::Object(_) => "object".into(),
    }
}

struct Draft {
    schema_version: u64,
    design_name: String,
    protocol: Protocol,
    clock: String,
    reset: ResetSpec,
    ports: Vec<RawPort>,
    fields: Vec<SeqItemField>,
    registers: Vec<RegisterDecl>,
    bfms: Vec<BfmDecl>,
    agents: Option<Vec<AgentSpec>>,
    ack_timeout: u32,
}

#[derive(Default)]
struct Walker {
    errors: Vec<BlueprintError>,
}

impl Walker {
    fn violation(&mut self, path: &str, expected: &str, found: String) {
        self.errors.push(BlueprintError::SchemaViolation {
            path: path.to_string(),
            expected: expected.to_string(),
            found,
        });
    }

    fn object<'v>(&mut self, v: &'v Value, path: &str) -> Option<&'v Map<String, Value>> {
        match v {
            Value::Object(m) => Some(m),
            other => {
                self.violation(path, "object", describe(other));
                None
            }
        }
    }

    fn array<'v>(&mut self, v: &'v Value, path: &str) -> Option<&'v Vec<Value>> {
        match v {
            Value::Array(a) => Some(a),
            other => {
                self.violation(path, "array", describe(other));
                None
            }
        }
    }

    /// Reports unknown and missing keys. Returns false if a required key is absent.
    fn keys(
        &mut self,
        m: &Map<String, Value>,
        path: &str,
        required: &[&str],
        optional: &[&str],
    ) -> bool {
        for key in m.keys() {
            if !required.contains(&key.as_str()) && !optional.contains(&key.as_str()) {
                let mut allowed: Vec<&str> = required.iter().chain(optional).copied().collect();
                allowed.sort_unstable();
                self.violation(
                    &format!("{path}.{key}"),
                    &format!("one of the known keys [{}]", allowed.join(", ")),
                    "unknown key".into(),
                );
            }
        }
        let mut ok = true;
        for key in required {
            if !m.contains_key(*key) {
                self.violation(&format!("{path}.{key}"), "a value", "missing".into());
                ok = false;
            }
        }
        ok
    }

    fn string(&mut self, v: &Value, path: &str) -> Option<String> {
        match v {
            Value::String(s) => Some(s.clone()),
            other => {
                self.violation(path, "string", describe(other));
                None
            }
        }
    }

    fn ident(&mut self, v: &Value, path: &str) -> Option<String> {
        let s = self.string(v, path)?;
        if is_identifier(&s) {
            Some(s)
        } else {
            self.violation(path, "identifier", describe(v));
            None
        }
    }

    fn uint(&mut self, v: &Value, path: &str) -> Option<u64> {
        match v {
            Value::Number(n) if n.is_u64() => n.as_u64(),
            Value::String(s) => match parse_uint_literal(s) {
                Some(n) => Some(n),
                None => {
                    self.violation(path, "unsigned integer", describe(v));
                    None
                }
            },
            other => {
                self.violation(path, "unsigned integer", describe(other));
                None
            }
        }
    }

    fn hex_addr(&mut self, v: &Value, path: &str) -> Option<u64> {
        match v {
            Value::String(s) if s.to_ascii_lowercase().starts_with("0x") => {
                match parse_uint_literal(s) {
                    Some(n) => Some(n),
                    None => {
                        self.violation(path, "hex string \"0x..\"", describe(v));
                        None
                    }
                }
            }
            Value::Number(n) if n.is_u64() => n.as_u64(),
            other => {
                self.violation(path, "hex string \"0x..\"", describe(other));
                None
            }
        }
    }

    fn width(&mut self, v: &Value, path: &str) -> Option<u32> {
        match v {
            Value::Number(n) if n.as_u64().is_some_and(|w| (1..=4096).contains(&w)) => {
                n.as_u64().map(|w| w as u32)
            }
            other => {
                self.violation(path, "integer width >= 1", describe(other));
                None
            }
        }
    }

    fn boolean(&mut self, v: &Value, path: &str) -> Option<bool> {
        match v {
            Value::Bool(b) => Some(*b),
            other => {
                self.violation(path, "boolean", describe(other));
                None
            }
        }
    }

    fn enumerated<T>(
        &mut self,
        v: &Value,
        path: &str,
        choices: &[(&str, T)],
    ) -> Option<T>
    where
        T: Copy,
    {
        let s = self.string(v, path)?;
        match choices.iter().find(|(name, _)| *name == s) {
            Some((_, t)) => Some(*t),
            None => {
                let names: Vec<&str> = choices.iter().map(|(n, _)| *n).collect();
                self.violation(path, &format!("one of [{}]", names.join(", ")), describe(v));
                None
            }
        }
    }

    fn blueprint(&mut self, root: &Value) -> Option<Draft> {
        let m = self.object(root, "$")?;
        self.keys(
            m,
            "$",
            &[
                "schema_version",
                "design_name",
                "protocol",
                "clock",
                "reset",
                "ports",
                "seq_item_fields",
            ],
            &["registers", "bfms", "agents", "ack_timeout_cycles"],
        );

        let schema_version = m.get("schema_version").and_then(|v| {
            let n = self.uint(v, "$.schema_version")?;
            if n != SCHEMA_VERSION {
                self.violation(
                    "$.schema_version",
                    &format!("supported version {SCHEMA_VERSION}"),
                    describe(v),
                );
                None
            } else {
                Some(n)
            }
        });
        let design_name = m
            .get("design_name")
            .and_then(|v| self.ident(v, "$.design_name"));
        let protocol = m.get("protocol").and_then(|v| self.protocol(v));
        let clock = m.get("clock").and_then(|v| self.ident(v, "$.clock"));
        let reset = m.get("reset").and_then(|v| self.reset(v));
        let ports = m
            .get("ports")
            .and_then(|v| self.list(v, "$.ports", Self::port));
        let fields = m
            .get("seq_item_fields")
            .and_then(|v| self.list(v, "$.seq_item_fields", Self::field));
        let registers = match m.get("registers") {
            Some(v) => self.list(v, "$.registers", Self::register),
            None => Some(Vec::new()),
        };
        let bfms = match m.get("bfms") {
            Some(v) => self.list(v, "$.bfms", Self::bfm),
            None => Some(Vec::new()),
        };
        let agents = match m.get("agents") {
            Some(v) => self.list(v, "$.agents", Self::agent).map(Some),
            None => Some(None),
        };
        let ack_timeout = match m.get("ack_timeout_cycles") {
            Some(v) => match self.uint(v, "$.ack_timeout_cycles") {
                Some(n) if (1..=u32::MAX as u64).contains(&n) => Some(n as u32),
                Some(_) => {
                    self.violation("$.ack_timeout_cycles", "positive 32-bit integer", describe(v));
                    None
                }
                None => None,
            },
            None => Some(DEFAULT_ACK_TIMEOUT),
        };

        Some(Draft {
            schema_version: schema_version?,
            design_name: design_name?,
            protocol: protocol?,
            clock: clock?,
            reset: reset?,
            ports: ports?,
            fields: fields?,
            registers: registers?,
            bfms: bfms?,
            agents: agents?,
            ack_timeout: ack_timeout?,
        })
    }

    fn list<T>(
        &mut self,
        v: &Value,
        path: &str,
        item: fn(&mut Self, &Value, &str) -> Option<T>,
    ) -> Option<Vec<T>> {
        let items = self.array(v, path)?;
        let mut out = Vec::with_capacity(items.len());
        let mut ok = true;
        for (i, entry) in items.iter().enumerate() {
            match item(self, entry, &format!("{path}[{i}]")) {
                Some(t) => out.push(t),
                None => ok = false,
            }
        }
        ok.then_some(out)
    }

    fn protocol(&mut self, v: &Value) -> Option<Protocol> {
        let path = "$.protocol";
        let m = self.object(v, path)?;
        self.keys(m, path, &["type"], &["variant"]);
        let kind = m.get("type").and_then(|t| {
            self.enumerated(
                t,
                "$.protocol.type",
                &[("direct", 0u8), ("wishbone", 1u8), ("axi4lite", 2u8)],
            )
        })?;
        match (kind, m.get("variant")) {
            (0, Some(var)) => {
                let name = self.string(var, "$.protocol.variant")?;
                match HandshakeVariant::from_name(&name) {
                    Some(h) => Some(Protocol::Direct(h)),
                    None => {
                        self.violation(
                            "$.protocol.variant",
                            "one of [ready_done, valid_ready, busy, streaming]",
                            describe(var),
                        );
                        None
                    }
                }
            }
            (0, None) => {
                self.violation(
                    "$.protocol.variant",
                    "handshake variant for direct protocol",
                    "missing".into(),
                );
                None
            }
            (_, Some(var)) => {
                self.violation(
                    "$.protocol.variant",
                    "no variant for bus protocols",
                    describe(var),
                );
                None
            }
            (1, None) => Some(Protocol::Wishbone),
            _ => Some(Protocol::Axi4Lite),
        }
    }

    fn reset(&mut self, v: &Value) -> Option<ResetSpec> {
        let path = "$.reset";
        let m = self.object(v, path)?;
        self.keys(m, path, &["name", "active"], &[]);
        let name = m.get("name").and_then(|n| self.ident(n, "$.reset.name"));
        let active = m.get("active").and_then(|a| {
            self.enumerated(
                a,
                "$.reset.active",
                &[("high", ActiveLevel::High), ("low", ActiveLevel::Low)],
            )
        });
        Some(ResetSpec {
            name: name?,
            active: active?,
        })
    }

    fn port(&mut self, v: &Value, path: &str) -> Option<RawPort> {
        let m = self.object(v, path)?;
        self.keys(m, path, &["name", "width", "dir"], &[]);
        let name = m.get("name").and_then(|n| self.ident(n, &format!("{path}.name")));
        let width = m.get("width").and_then(|w| self.width(w, &format!("{path}.width")));
        let direction = m.get("dir").and_then(|d| {
            self.enumerated(
                d,
                &format!("{path}.dir"),
                &[
                    ("in", PortDirection::Input),
                    ("out", PortDirection::Output),
                    ("inout", PortDirection::Inout),
                ],
            )
        });
        Some(RawPort {
            name: name?,
            width: width?,
            direction: direction?,
        })
    }

    fn field(&mut self, v: &Value, path: &str) -> Option<SeqItemField> {
        let m = self.object(v, path)?;
        self.keys(
            m,
            path,
            &["name", "width", "direction", "role"],
            &["default", "cover_bins"],
        );
        let name = m.get("name").and_then(|n| self.ident(n, &format!("{path}.name")));
        let width = m.get("width").and_then(|w| self.width(w, &format!("{path}.width")));
        let direction = m.get("direction").and_then(|d| {
            self.enumerated(
                d,
                &format!("{path}.direction"),
                &[("to_dut", FieldDirection::ToDut), ("from_dut", FieldDirection::FromDut)],
            )
        });
        let role = m.get("role").and_then(|r| {
            self.enumerated(
                r,
                &format!("{path}.role"),
                &[
                    ("data", FieldRole::Data),
                    ("config", FieldRole::Config),
                    ("control", FieldRole::Control),
                    ("status", FieldRole::Status),
                ],
            )
        });
        let default_value = match m.get("default") {
            Some(d) => Some(self.uint(d, &format!("{path}.default"))),
            None => Some(None),
        };
        let cover_bins = match m.get("cover_bins") {
            Some(b) => self
                .list(b, &format!("{path}.cover_bins"), Self::cover_bin)
                .map(Some),
            None => Some(None),
        };
        Some(SeqItemField {
            name: name?,
            width: width?,
            direction: direction?,
            role: role?,
            default_value: default_value?,
            cover_bins: cover_bins?,
        })
    }

    fn cover_bin(&mut self, v: &Value, path: &str) -> Option<CoverBin> {
        let m = self.object(v, path)?;
        let kind_name = m
            .get("kind")
            .and_then(|k| self.string(k, &format!("{path}.kind")));
        let optional: &[&str] = match kind_name.as_deref() {
            Some("value") => &["value"],
            Some("range") => &["lo", "hi"],
            _ => &[],
        };
        self.keys(m, path, &["name", "kind"], optional);
        let name = m.get("name").and_then(|n| self.ident(n, &format!("{path}.name")));
        let kind = match kind_name.as_deref() {
            Some("value") => match m.get("value") {
                Some(val) => self.uint(val, &format!("{path}.value")).map(CoverBinKind::Value),
                None => {
                    self.violation(&format!("{path}.value"), "a value", "missing".into());
                    None
                }
            },
            Some("range") => {
                let lo = m.get("lo").and_then(|x| self.uint(x, &format!("{path}.lo")));
                let hi = m.get("hi").and_then(|x| self.uint(x, &format!("{path}.hi")));
                if !m.contains_key("lo") || !m.contains_key("hi") {
                    self.violation(&format!("{path}.lo/hi"), "range bounds", "missing".into());
                }
                match (lo, hi) {
                    (Some(lo), Some(hi)) => Some(CoverBinKind::Range { lo, hi }),
                    _ => None,
                }
            }
            Some("auto_width") => Some(CoverBinKind::AutoWidth),
            Some(_) => {
                self.violation(
                    &format!("{path}.kind"),
                    "one of [value, range, auto_width]",
                    describe(&m["kind"]),
                );
                None
            }
            None => None,
        };
        Some(CoverBin {
            name: name?,
            kind: kind?,
        })
    }

    fn register(&mut self, v: &Value, path: &str) -> Option<RegisterDecl> {
        let m = self.object(v, path)?;
        self.keys(m, path, &["name", "addr", "width", "access"], &["fields"]);
        let name = m.get("name").and_then(|n| self.ident(n, &format!("{path}.name")));
        let address = m.get("addr").and_then(|a| self.hex_addr(a, &format!("{path}.addr")));
        let width = m.get("width").and_then(|w| self.width(w, &format!("{path}.width")));
        let access = m.get("access").and_then(|a| {
            self.enumerated(
                a,
                &format!("{path}.access"),
                &[
                    ("rw", RegisterAccess::Rw),
                    ("ro", RegisterAccess::Ro),
                    ("wo", RegisterAccess::Wo),
                ],
            )
        });
        let fields = match m.get("fields") {
            Some(f) => self.list(f, &format!("{path}.fields"), Self::register_field),
            None => Some(Vec::new()),
        };
        Some(RegisterDecl {
            name: name?,
            address: address?,
            width: width?,
            access: access?,
            fields: fields?,
        })
    }

    fn register_field(&mut self, v: &Value, path: &str) -> Option<RegisterField> {
        let m = self.object(v, path)?;
        self.keys(m, path, &["name", "lsb", "msb"], &["default"]);
        let name = m.get("name").and_then(|n| self.ident(n, &format!("{path}.name")));
        let lsb = m.get("lsb").and_then(|x| self.uint(x, &format!("{path}.lsb")));
        let msb = m.get("msb").and_then(|x| self.uint(x, &format!("{path}.msb")));
        let default = match m.get("default") {
            Some(d) => Some(self.uint(d, &format!("{path}.default"))),
            None => Some(None),
        };
        let (lsb, msb) = (lsb?, msb?);
        if lsb > msb || msb >= MAX_FIELD_WIDTH as u64 {
            self.violation(
                &format!("{path}.msb"),
                "lsb <= msb < 64",
                format!("lsb {lsb}, msb {msb}"),
            );
            return None;
        }
        Some(RegisterField {
            name: name?,
            lsb: lsb as u32,
            msb: msb as u32,
            default: default?,
        })
    }

    fn bfm(&mut self, v: &Value, path: &str) -> Option<BfmDecl> {
        let m = self.object(v, path)?;
        self.keys(m, path, &["kind", "name", "connections"], &[]);
        let kind = m.get("kind").and_then(|k| {
            let name = self.string(k, &format!("{path}.kind"))?;
            let kind = BfmKind::from_name(&name);
            if kind.is_none() {
                let names: Vec<&str> = BfmKind::ALL.iter().map(|k| k.as_str()).collect();
                self.violation(
                    &format!("{path}.kind"),
                    &format!("one of [{}]", names.join(", ")),
                    describe(k),
                );
            }
            kind
        });
        let name = m.get("name").and_then(|n| self.ident(n, &format!("{path}.name")));
        let connections = m.get("connections").and_then(|c| {
            let cpath = format!("{path}.connections");
            let cm = self.object(c, &cpath)?;
            let mut out = BTreeMap::new();
            let mut ok = true;
            for (bfm_port, dut_port) in cm {
                match self.ident(dut_port, &format!("{cpath}.{bfm_port}")) {
                    Some(d) => {
                        out.insert(bfm_port.clone(), d);
                    }
                    None => ok = false,
                }
            }
            ok.then_some(out)
        });
        Some(BfmDecl {
            kind: kind?,
            instance_name: name?,
            connections: connections?,
        })
    }

    fn agent(&mut self, v: &Value, path: &str) -> Option<AgentSpec> {
        let m = self.object(v, path)?;
        self.keys(m, path, &["name"], &["active", "monitor", "coverpoints"]);
        let name = m.get("name").and_then(|n| self.ident(n, &format!("{path}.name")));
        let active = match m.get("active") {
            Some(a) => self.boolean(a, &format!("{path}.active")),
            None => Some(true),
        };
        let monitor = match m.get("monitor") {
            Some(mon) => self.list(mon, &format!("{path}.monitor"), Self::monitor_signal),
            None => Some(Vec::new()),
        };
        let coverpoints = match m.get("coverpoints") {
            Some(c) => self.list(c, &format!("{path}.coverpoints"), |w, v, p| w.ident(v, p)),
            None => Some(Vec::new()),
        };
        Some(AgentSpec {
            name: name?,
            active: active?,
            monitor: monitor?,
            coverpoints: coverpoints?,
        })
    }

    fn monitor_signal(&mut self, v: &Value, path: &str) -> Option<MonitorSignal> {
        let m = self.object(v, path)?;
        self.keys(m, path, &["signal", "width"], &[]);
        let signal = m.get("signal").and_then(|s| self.ident(s, &format!("{path}.signal")));
        let width = m.get("width").and_then(|w| self.width(w, &format!("{path}.width")));
        Some(MonitorSignal {
            signal: signal?,
            width: width?,
        })
    }
}

fn invariant(errors: &mut Vec<BlueprintError>, msg: String) {
    errors.push(BlueprintError::InvariantViolation(msg));
}

fn duplicates<'a>(names: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut seen = BTreeSet::new();
    let mut dups = BTreeSet::new();
    for n in names {
        if !seen.insert(n) {
            dups.insert(n);
        }
    }
    dups.into_iter().collect()
}

fn finish(d: Draft, classifier: &ClassifierConfig) -> Result<Blueprint, Vec<BlueprintError>> {
    let mut errors = Vec::new();
    let ports = classify_ports(&d.ports, d.protocol, classifier);

    for dup in duplicates(ports.iter().map(|p| p.name.as_str())) {
        invariant(&mut errors, format!("port {dup:?} declared more than once"));
    }
    let port = |name: &str| ports.iter().find(|p| p.name == name);

    match port(&d.clock) {
        None => invariant(&mut errors, format!("clock {:?} is not in the port list", d.clock)),
        Some(p) if p.direction != PortDirection::Input || p.width != 1 => invariant(
            &mut errors,
            format!("clock {:?} must be a 1-bit input", d.clock),
        ),
        _ => {}
    }
    match port(&d.reset.name) {
        None => invariant(
            &mut errors,
            format!("reset {:?} is not in the port list", d.reset.name),
        ),
        Some(p) if p.direction != PortDirection::Input || p.width != 1 => invariant(
            &mut errors,
            format!("reset {:?} must be a 1-bit input", d.reset.name),
        ),
        _ => {}
    }

    // registers
    for dup in duplicates(d.registers.iter().map(|r| r.name.as_str())) {
        invariant(&mut errors, format!("register {dup:?} declared more than once"));
    }
    let mut addrs = BTreeMap::new();
    for reg in &d.registers {
        if let Some(prev) = addrs.insert(reg.address, &reg.name) {
            invariant(
                &mut errors,
                format!(
                    "registers {prev:?} and {:?} share address {}",
                    reg.name,
                    crate::num::hex(reg.address)
                ),
            );
        }
        if reg.width > MAX_FIELD_WIDTH {
            invariant(
                &mut errors,
                format!("register {:?} is wider than {MAX_FIELD_WIDTH} bits", reg.name),
            );
        }
        for dup in duplicates(reg.fields.iter().map(|f| f.name.as_str())) {
            invariant(
                &mut errors,
                format!("register {:?} declares field {dup:?} twice", reg.name),
            );
        }
        let mut used = 0u64;
        for f in &reg.fields {
            if f.msb >= reg.width {
                invariant(
                    &mut errors,
                    format!(
                        "field {}.{} bits [{}:{}] exceed register width {}",
                        reg.name, f.name, f.msb, f.lsb, reg.width
                    ),
                );
                continue;
            }
            let bits = mask(f.width()) << f.lsb;
            if used & bits != 0 {
                invariant(
                    &mut errors,
                    format!("field {}.{} overlaps another field", reg.name, f.name),
                );
            }
            used |= bits;
            if let Some(def) = f.default {
                if !fits_width(def, f.width()) {
                    invariant(
                        &mut errors,
                        format!(
                            "default {def} of {}.{} does not fit {} bits",
                            reg.name,
                            f.name,
                            f.width()
                        ),
                    );
                }
            }
        }
    }
    if d.protocol.is_bus() && d.registers.is_empty() {
        invariant(
            &mut errors,
            format!("protocol {} requires a nonempty register map", d.protocol),
        );
    }

    let bus = match resolve_bus(d.protocol, &ports) {
        Ok(bus) => Some(bus),
        Err(missing) => {
            for m in missing {
                invariant(&mut errors, m);
            }
            None
        }
    };

    // seq_item fields
    for dup in duplicates(d.fields.iter().map(|f| f.name.as_str())) {
        invariant(&mut errors, format!("seq_item field {dup:?} declared more than once"));
    }
    for f in &d.fields {
        if f.width > MAX_FIELD_WIDTH {
            invariant(
                &mut errors,
                format!("seq_item field {:?} is wider than {MAX_FIELD_WIDTH} bits", f.name),
            );
            continue;
        }
        if let Some(def) = f.default_value {
            if !fits_width(def, f.width) {
                invariant(
                    &mut errors,
                    format!("default {def} of field {:?} does not fit {} bits", f.name, f.width),
                );
            }
        }
        let port_hit = port(&f.name);
        if let Some(p) = port_hit {
            if p.class != PortClass::Stimulus {
                invariant(
                    &mut errors,
                    format!(
                        "seq_item field {:?} names a {} port; only stimulus signals may be fields",
                        f.name,
                        p.class.as_str()
                    ),
                );
            }
        }
        let reg_hits = d
            .registers
            .iter()
            .map(|r| {
                let whole = (r.fields.is_empty() && r.name == f.name) as usize;
                whole + r.fields.iter().filter(|rf| rf.name == f.name).count()
            })
            .sum::<usize>();
        let hits = port_hit.is_some() as usize + reg_hits;
        if hits == 0 {
            invariant(
                &mut errors,
                format!(
                    "seq_item field {:?} maps to no port or register field",
                    f.name
                ),
            );
        } else if hits > 1 {
            invariant(
                &mut errors,
                format!(
                    "seq_item field {:?} maps to {hits} signals; it must map to exactly one",
                    f.name
                ),
            );
        }
        if let Some(bins) = &f.cover_bins {
            for dup in duplicates(bins.iter().map(|b| b.name.as_str())) {
                invariant(
                    &mut errors,
                    format!("field {:?} declares cover bin {dup:?} twice", f.name),
                );
            }
            for b in bins {
                let ok = match b.kind {
                    CoverBinKind::Value(v) => fits_width(v, f.width),
                    CoverBinKind::Range { lo, hi } => lo <= hi && fits_width(hi, f.width),
                    CoverBinKind::AutoWidth => true,
                };
                if !ok {
                    invariant(
                        &mut errors,
                        format!(
                            "cover bin {}.{} is outside the {}-bit value space",
                            f.name, b.name, f.width
                        ),
                    );
                }
            }
        }
    }

    // bfms
    for dup in duplicates(d.bfms.iter().map(|b| b.instance_name.as_str())) {
        invariant(&mut errors, format!("BFM instance {dup:?} declared more than once"));
    }
    for b in &d.bfms {
        let spec = bfm_spec(b.kind);
        for (bfm_port, dut_port) in &b.connections {
            if !spec.ports.iter().any(|p| &p.name == bfm_port) {
                invariant(
                    &mut errors,
                    format!(
                        "BFM {:?} ({}) has no port {bfm_port:?}",
                        b.instance_name,
                        b.kind.as_str()
                    ),
                );
            }
            if port(dut_port).is_none() {
                invariant(
                    &mut errors,
                    format!(
                        "BFM {:?} connects {bfm_port:?} to unknown DUT port {dut_port:?}",
                        b.instance_name
                    ),
                );
            }
        }
    }

    let agents = d.agents.unwrap_or_else(|| {
        vec![AgentSpec {
            name: format!("{}_agent", d.design_name),
            active: true,
            monitor: Vec::new(),
            coverpoints: Vec::new(),
        }]
    });
    for dup in duplicates(agents.iter().map(|a| a.name.as_str())) {
        invariant(&mut errors, format!("agent {dup:?} declared more than once"));
    }

    if !errors.is_empty() {
        return Err(errors);
    }
    Ok(Blueprint {
        schema_version: d.schema_version,
        design_name: d.design_name,
        protocol: d.protocol,
        clock_signal: d.clock,
        reset: d.reset,
        agents,
        seq_item_fields: d.fields,
        register_map: d.registers,
        bfms: d.bfms,
        raw_port_list: ports,
        ack_timeout_cycles: d.ack_timeout,
        bus: bus.expect("bus resolved when no errors"),
    })
}

fn tokens(name: &str) -> Vec<String> {
    name.to_ascii_lowercase()
        .split('_')
        .map(str::to_string)
        .collect()
}

fn find_port(
    ports: &[PortDecl],
    dir: Option<PortDirection>,
    pred: impl Fn(&[String]) -> bool,
) -> Option<String> {
    ports
        .iter()
        .filter(|p| dir.is_none_or(|d| p.direction == d))
        .find(|p| pred(&tokens(&p.name)))
        .map(|p| p.name.clone())
}

/// Resolves the protocol's handshake and data ports by name tokens.
pub(crate) fn resolve_bus(
    protocol: Protocol,
    ports: &[PortDecl],
) -> Result<BusInterface, Vec<String>> {
    use PortDirection::{Input, Output};
    let mut missing = Vec::new();
    let mut need = |role: &str, found: Option<String>| -> String {
        found.unwrap_or_else(|| {
            missing.push(format!("{protocol} interface has no {role} port"));
            String::new()
        })
    };
    let has = |t: &[String], any: &[&str]| t.iter().any(|x| any.contains(&x.as_str()));
    let bus = match protocol {
        Protocol::Wishbone => {
            let wb = WishbonePorts {
                cyc: need("cyc", find_port(ports, Some(Input), |t| has(t, &["cyc"]))),
                stb: need("stb", find_port(ports, Some(Input), |t| has(t, &["stb"]))),
                ack: need("ack", find_port(ports, Some(Output), |t| has(t, &["ack"]))),
                we: need("we", find_port(ports, Some(Input), |t| has(t, &["we"]))),
                adr: need("address", find_port(ports, Some(Input), |t| has(t, &["adr", "addr"]))),
                dat_w: need("write data", find_port(ports, Some(Input), |t| has(t, &["dat", "data"]))),
                dat_r: need("read data", find_port(ports, Some(Output), |t| has(t, &["dat", "data"]))),
                sel: find_port(ports, Some(Input), |t| has(t, &["sel"])),
                err: find_port(ports, Some(Output), |t| has(t, &["err"])),
            };
            BusInterface::Wishbone(wb)
        }
        Protocol::Axi4Lite => {
            let last = |role: &'static str, dir: PortDirection| {
                find_port(ports, Some(dir), move |t| t.last().is_some_and(|l| l == role))
            };
            let axi = AxiLitePorts {
                awaddr: need("awaddr", last("awaddr", Input)),
                awvalid: need("awvalid", last("awvalid", Input)),
                awready: need("awready", last("awready", Output)),
                wdata: need("wdata", last("wdata", Input)),
                wstrb: last("wstrb", Input),
                wvalid: need("wvalid", last("wvalid", Input)),
                wready: need("wready", last("wready", Output)),
                bresp: last("bresp", Output),
                bvalid: need("bvalid", last("bvalid", Output)),
                bready: need("bready", last("bready", Input)),
                araddr: need("araddr", last("araddr", Input)),
                arvalid: need("arvalid", last("arvalid", Input)),
                arready: need("arready", last("arready", Output)),
                rdata: need("rdata", last("rdata", Output)),
                rresp: last("rresp", Output),
                rvalid: need("rvalid", last("rvalid", Output)),
                rready: need("rready", last("rready", Input)),
            };
            BusInterface::Axi4Lite(axi)
        }
        Protocol::Direct(variant) => {
            let tok = |role: &'static str, dir: PortDirection| {
                find_port(ports, Some(dir), move |t| t.iter().any(|x| x == role))
            };
            let mut dp = DirectPorts {
                variant,
                start: None,
                valid: None,
                ready: None,
                done: None,
                busy: None,
                last: None,
            };
            match variant {
                HandshakeVariant::ReadyDone => {
                    dp.start = Some(need("start", tok("start", Input)));
                    dp.done = Some(need("done", tok("done", Output)));
                    dp.ready = tok("ready", Output);
                }
                HandshakeVariant::ValidReady => {
                    dp.valid = Some(need("valid", tok("valid", Input)));
                    dp.ready = Some(need("ready", tok("ready", Output)));
                }
                HandshakeVariant::Busy => {
                    dp.start = Some(need("start", tok("start", Input)));
                    dp.busy = Some(need("busy", tok("busy", Output)));
                }
                HandshakeVariant::Streaming => {
                    dp.valid = Some(need("valid", tok("valid", Input)));
                    dp.ready = tok("ready", Output);
                    dp.last = tok("last", Input);
                }
            }
            BusInterface::Direct(dp)
        }
    };
    if missing.is_empty() {
        Ok(bus)
    } else {
        Err(missing)
    }
}
