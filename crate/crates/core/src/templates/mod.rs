// SPDX-License-Identifier: Apache-2.0

//! Template library and rendering of every UVM component from a Blueprint.
//!
//! Templates live as `*.sv.tpl` files with a `{# ... #}` header naming the
//! template, its protocol scope, its component kind and the slots it reads.
//! The built-in set is compiled into the binary; [`TemplateLibrary::from_dir`]
//! loads replacements from disk.

mod context;
mod engine;
mod lint;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::OnceLock;

use serde::Serialize;
use serde_json::Value;

use crate::blueprint::{
    consistency_check, BfmDecl, BfmKind, Blueprint, HandshakeVariant, PortDirection, Protocol,
};
use crate::num::parse_uint_literal;
use crate::strategy::StrategyMap;

pub use context::{build_context, auto_bins, CoverBinSpec};
pub use engine::{parse_header, CompiledBody, TemplateError};
pub use lint::{check_protocol_rules, check_text, Rule, RuleReport, RuleViolation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateScope {
    Wishbone,
    Axi4Lite,
    Direct(HandshakeVariant),
    ProtocolAgnostic,
}

impl TemplateScope {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "wishbone" => Some(TemplateScope::Wishbone),
            "axi4lite" => Some(TemplateScope::Axi4Lite),
            "protocol_agnostic" => Some(TemplateScope::ProtocolAgnostic),
            other => other
                .strip_prefix("direct_")
                .and_then(HandshakeVariant::from_name)
                .map(TemplateScope::Direct),
        }
    }

    pub fn name(self) -> String {
        match self {
            TemplateScope::Wishbone => "wishbone".into(),
            TemplateScope::Axi4Lite => "axi4lite".into(),
            TemplateScope::Direct(v) => format!("direct_{}", v.as_str()),
            TemplateScope::ProtocolAgnostic => "protocol_agnostic".into(),
        }
    }

    pub fn of_protocol(p: Protocol) -> Self {
        match p {
            Protocol::Wishbone => TemplateScope::Wishbone,
            Protocol::Axi4Lite => TemplateScope::Axi4Lite,
            Protocol::Direct(v) => TemplateScope::Direct(v),
        }
    }

    pub fn accepts(self, p: Protocol) -> bool {
        self == TemplateScope::ProtocolAgnostic || self == TemplateScope::of_protocol(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentKind {
    Driver,
    Monitor,
    Scoreboard,
    Subscriber,
    SeqItem,
    Bfm,
    Top,
    SequencePkg,
}

impl ComponentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ComponentKind::Driver => "driver",
            ComponentKind::Monitor => "monitor",
            ComponentKind::Scoreboard => "scoreboard",
            ComponentKind::Subscriber => "subscriber",
            ComponentKind::SeqItem => "seq_item",
            ComponentKind::Bfm => "bfm",
            ComponentKind::Top => "top",
            ComponentKind::SequencePkg => "sequence_pkg",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [
            ComponentKind::Driver,
            ComponentKind::Monitor,
            ComponentKind::Scoreboard,
            ComponentKind::Subscriber,
            ComponentKind::SeqItem,
            ComponentKind::Bfm,
            ComponentKind::Top,
            ComponentKind::SequencePkg,
        ]
        .into_iter()
        .find(|k| k.as_str() == name)
    }

    /// Files the compile-fix loop may never touch.
    pub fn is_protected(self) -> bool {
        !matches!(self, ComponentKind::SeqItem | ComponentKind::SequencePkg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub name: String,
    pub protocol_scope: TemplateScope,
    pub kind: ComponentKind,
    pub required_slots: BTreeSet<String>,
    pub header: BTreeMap<String, String>,
    /// Template text after the header.
    pub body: String,
    compiled: CompiledBody,
}

impl Template {
    pub fn parse(source: &str) -> Result<Template, TemplateError> {
        let header_err = |message: &str| TemplateError::Header {
            template: "<unnamed>".into(),
            message: message.into(),
        };
        let (header, body) = parse_header(source).ok_or_else(|| header_err("missing {# ... #} header"))?;
        let name = header.get("name").cloned().ok_or_else(|| header_err("missing name"))?;
        let err = |message: String| TemplateError::Header {
            template: name.clone(),
            message,
        };
        let scope_text = header.get("scope").ok_or_else(|| err("missing scope".into()))?;
        let protocol_scope =
            TemplateScope::from_name(scope_text).ok_or_else(|| err(format!("unknown scope {scope_text:?}")))?;
        let kind_text = header.get("kind").ok_or_else(|| err("missing kind".into()))?;
        let kind =
            ComponentKind::from_name(kind_text).ok_or_else(|| err(format!("unknown kind {kind_text:?}")))?;
        let required_slots: BTreeSet<String> = header
            .get("slots")
            .map(|s| {
                s.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            })
            .unwrap_or_default();
        let compiled = CompiledBody::compile(&name, body)?;
        if let Some(slot) = compiled
            .referenced_slots()
            .into_iter()
            .find(|s| !required_slots.contains(s))
        {
            return Err(TemplateError::UndeclaredSlot {
                template: name,
                slot,
            });
        }
        Ok(Template {
            name,
            protocol_scope,
            kind,
            required_slots,
            header,
            body: body.to_string(),
            compiled,
        })
    }

    /// Renders against a prepared context. Every declared slot must be present.
    pub fn render_context(&self, context: &Value) -> Result<String, TemplateError> {
        if let Some(missing) = self
            .required_slots
            .iter()
            .find(|s| context.get(s.as_str()).is_none())
        {
            return Err(TemplateError::MissingSlot(missing.clone()));
        }
        self.compiled.render(context)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RenderedComponent {
    pub kind: ComponentKind,
    pub file_name: String,
    pub content: String,
    pub protected: bool,
}

impl RenderedComponent {
    pub fn new(kind: ComponentKind, file_name: String, content: String) -> Self {
        RenderedComponent {
            kind,
            file_name,
            content,
            protected: kind.is_protected(),
        }
    }
}

const BUILTIN_SOURCES: &[(&str, &str)] = &[
    ("driver_wishbone.sv.tpl", include_str!("../../templates/driver_wishbone.sv.tpl")),
    ("driver_axi4lite.sv.tpl", include_str!("../../templates/driver_axi4lite.sv.tpl")),
    (
        "driver_direct_ready_done.sv.tpl",
        include_str!("../../templates/driver_direct_ready_done.sv.tpl"),
    ),
    (
        "driver_direct_valid_ready.sv.tpl",
        include_str!("../../templates/driver_direct_valid_ready.sv.tpl"),
    ),
    ("driver_direct_busy.sv.tpl", include_str!("../../templates/driver_direct_busy.sv.tpl")),
    (
        "driver_direct_streaming.sv.tpl",
        include_str!("../../templates/driver_direct_streaming.sv.tpl"),
    ),
    ("monitor.sv.tpl", include_str!("../../templates/monitor.sv.tpl")),
    ("scoreboard.sv.tpl", include_str!("../../templates/scoreboard.sv.tpl")),
    ("subscriber.sv.tpl", include_str!("../../templates/subscriber.sv.tpl")),
    ("seq_item.sv.tpl", include_str!("../../templates/seq_item.sv.tpl")),
    ("top.sv.tpl", include_str!("../../templates/top.sv.tpl")),
    ("bfm_gpio.sv.tpl", include_str!("../../templates/bfm_gpio.sv.tpl")),
    ("bfm_i2c_slave.sv.tpl", include_str!("../../templates/bfm_i2c_slave.sv.tpl")),
    ("bfm_mii_phy.sv.tpl", include_str!("../../templates/bfm_mii_phy.sv.tpl")),
    ("bfm_sdram_model.sv.tpl", include_str!("../../templates/bfm_sdram_model.sv.tpl")),
    ("bfm_spi_slave.sv.tpl", include_str!("../../templates/bfm_spi_slave.sv.tpl")),
    ("bfm_uart_serial.sv.tpl", include_str!("../../templates/bfm_uart_serial.sv.tpl")),
    ("bfm_wishbone_slave.sv.tpl", include_str!("../../templates/bfm_wishbone_slave.sv.tpl")),
];

/// An immutable set of templates keyed by name.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateLibrary {
    templates: BTreeMap<String, Template>,
}

impl TemplateLibrary {
    pub fn builtin() -> &'static TemplateLibrary {
        static LIB: OnceLock<TemplateLibrary> = OnceLock::new();
        LIB.get_or_init(|| {
            let templates = BUILTIN_SOURCES
                .iter()
                .map(|(file, src)| {
                    let t = Template::parse(src)
                        .unwrap_or_else(|e| panic!("built-in template {file} is broken: {e}"));
                    (t.name.clone(), t)
                })
                .collect();
            TemplateLibrary { templates }
        })
    }

    /// Built-ins overlaid with every `*.sv.tpl` found in `dir`.
    pub fn from_dir(dir: &Path) -> Result<TemplateLibrary, TemplateError> {
        let io = |e: std::io::Error| TemplateError::Io {
            path: dir.display().to_string(),
            message: e.to_string(),
        };
        let mut lib = TemplateLibrary::builtin().clone();
        let mut entries: Vec<_> = std::fs::read_dir(dir)
            .map_err(io)?
            .collect::<Result<Vec<_>, _>>()
            .map_err(io)?;
        entries.sort_by_key(|e| e.path());
        for entry in entries {
            let path = entry.path();
            if !path.to_string_lossy().ends_with(".sv.tpl") {
                continue;
            }
            let src = std::fs::read_to_string(&path).map_err(|e| TemplateError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            let t = Template::parse(&src)?;
            lib.templates.insert(t.name.clone(), t);
        }
        Ok(lib)
    }

    pub fn get(&self, name: &str) -> Option<&Template> {
        self.templates.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    pub fn driver_for(&self, protocol: Protocol) -> Result<&Template, TemplateError> {
        self.need(&format!("driver_{}", protocol.scope_name()))
    }

    fn need(&self, name: &str) -> Result<&Template, TemplateError> {
        self.get(name).ok_or_else(|| TemplateError::Header {
            template: name.to_string(),
            message: "template not found in library".into(),
        })
    }

    pub fn bfm_template(&self, kind: BfmKind) -> Result<&Template, TemplateError> {
        self.need(&format!("bfm_{}", kind.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BfmPort {
    pub name: String,
    pub direction: PortDirection,
    pub width: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BfmAction {
    pub name: String,
    pub params: Vec<String>,
}

/// One smoke-test call, used by the predefined BFM sequences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SmokeCall {
    pub action: String,
    pub params: Vec<(String, u64)>,
}

/// What a BFM template offers: connectable ports, callable actions and
/// whether it supports backdoor memory writes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BfmSpec {
    pub kind: BfmKind,
    pub ports: Vec<BfmPort>,
    pub actions: Vec<BfmAction>,
    pub smoke: Vec<SmokeCall>,
    pub backdoor: bool,
    pub data_width: u32,
    pub timing: String,
}

impl BfmSpec {
    pub fn action(&self, name: &str) -> Option<&BfmAction> {
        self.actions.iter().find(|a| a.name == name)
    }

    fn from_template(kind: BfmKind, t: &Template) -> Result<BfmSpec, TemplateError> {
        let err = |message: String| TemplateError::Header {
            template: t.name.clone(),
            message,
        };
        let lines = |key: &str| -> Vec<String> {
            t.header
                .get(key)
                .map(|v| v.lines().map(|l| l.trim().to_string()).filter(|l| !l.is_empty()).collect())
                .unwrap_or_default()
        };
        let mut ports = Vec::new();
        for line in lines("ports") {
            let parts: Vec<&str> = line.split_whitespace().collect();
            let [name, dir, width] = parts.as_slice() else {
                return Err(err(format!("bad port line {line:?}")));
            };
            let direction = match *dir {
                "in" => PortDirection::Input,
                "out" => PortDirection::Output,
                "inout" => PortDirection::Inout,
                _ => return Err(err(format!("bad port direction in {line:?}"))),
            };
            let width = width.parse().map_err(|_| err(format!("bad port width in {line:?}")))?;
            ports.push(BfmPort {
                name: name.to_string(),
                direction,
                width,
            });
        }
        let mut actions = Vec::new();
        for line in lines("actions") {
            let (name, rest) = line
                .split_once('(')
                .ok_or_else(|| err(format!("bad action line {line:?}")))?;
            let params = rest
                .trim_end_matches(')')
                .split(',')
                .map(str::trim)
                .filter(|p| !p.is_empty())
                .map(String::from)
                .collect();
            actions.push(BfmAction {
                name: name.trim().to_string(),
                params,
            });
        }
        let mut smoke = Vec::new();
        for line in lines("smoke") {
            let mut words = line.split_whitespace();
            let action = words.next().unwrap_or_default().to_string();
            let mut params = Vec::new();
            for w in words {
                let (k, v) = w
                    .split_once('=')
                    .ok_or_else(|| err(format!("bad smoke parameter {w:?}")))?;
                let v = parse_uint_literal(v).ok_or_else(|| err(format!("bad smoke value {v:?}")))?;
                params.push((k.to_string(), v));
            }
            let Some(a) = actions.iter().find(|a: &&BfmAction| a.name == action) else {
                return Err(err(format!("smoke call to undeclared action {action:?}")));
            };
            if a.params.len() != params.len() || a.params.iter().zip(&params).any(|(p, (k, _))| p != k) {
                return Err(err(format!("smoke call {line:?} does not match the action signature")));
            }
            smoke.push(SmokeCall { action, params });
        }
        let backdoor = t.header.get("backdoor").is_some_and(|v| v == "yes");
        if backdoor && !actions.iter().any(|a| a.name == "preload") {
            return Err(err("backdoor BFM must offer preload(addr, value)".into()));
        }
        let data_width = t
            .header
            .get("data_width")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| err("missing data_width".into()))?;
        Ok(BfmSpec {
            kind,
            ports,
            actions,
            smoke,
            backdoor,
            data_width,
            timing: t.header.get("timing").cloned().unwrap_or_default(),
        })
    }
}

/// The built-in catalog entry for a BFM kind.
pub fn bfm_spec(kind: BfmKind) -> &'static BfmSpec {
    static CATALOG: OnceLock<BTreeMap<BfmKind, BfmSpec>> = OnceLock::new();
    let catalog = CATALOG.get_or_init(|| {
        let lib = TemplateLibrary::builtin();
        BfmKind::ALL
            .into_iter()
            .map(|k| {
                let t = lib.bfm_template(k).expect("every BFM kind has a built-in template");
                let spec = BfmSpec::from_template(k, t)
                    .unwrap_or_else(|e| panic!("built-in BFM template {} is broken: {e}", t.name));
                (k, spec)
            })
            .collect()
    });
    &catalog[&kind]
}

pub fn component_file_name(bp: &Blueprint, kind: ComponentKind) -> String {
    let d = &bp.design_name;
    match kind {
        ComponentKind::Top => format!("{d}_tb_top.sv"),
        ComponentKind::SequencePkg => format!("{d}_sequence_pkg.sv"),
        other => format!("{d}_{}.sv", other.as_str()),
    }
}

pub fn bfm_module_name(decl: &BfmDecl) -> String {
    format!("{}_bfm", decl.instance_name)
}

fn check_scope(template: &Template, bp: &Blueprint) -> Result<(), TemplateError> {
    if template.protocol_scope.accepts(bp.protocol) {
        Ok(())
    } else {
        Err(TemplateError::ProtocolMismatch {
            template: template.name.clone(),
            scope: template.protocol_scope.name(),
            protocol: bp.protocol.scope_name(),
        })
    }
}

/// Renders one non-BFM template against a Blueprint.
pub fn render(
    template: &Template,
    bp: &Blueprint,
    strategies: &StrategyMap,
) -> Result<RenderedComponent, TemplateError> {
    check_scope(template, bp)?;
    let mut ctx = build_context(bp, strategies);
    if template.kind == ComponentKind::Bfm {
        let kind = template
            .header
            .get("bfm")
            .and_then(|k| BfmKind::from_name(k))
            .ok_or_else(|| TemplateError::Header {
                template: template.name.clone(),
                message: "BFM template without a bfm kind".into(),
            })?;
        context::add_bfm_slots(&mut ctx, &format!("{}_bfm", kind.as_str()), bfm_spec(kind));
        let content = template.render_context(&ctx)?;
        return Ok(RenderedComponent::new(
            ComponentKind::Bfm,
            format!("{}_bfm.sv", kind.as_str()),
            content,
        ));
    }
    let content = template.render_context(&ctx)?;
    Ok(RenderedComponent::new(
        template.kind,
        component_file_name(bp, template.kind),
        content,
    ))
}

/// Renders one BFM instance.
pub fn render_bfm(
    lib: &TemplateLibrary,
    bp: &Blueprint,
    decl: &BfmDecl,
) -> Result<RenderedComponent, TemplateError> {
    let template = lib.bfm_template(decl.kind)?;
    let mut ctx = build_context(bp, &StrategyMap::new());
    let module = bfm_module_name(decl);
    context::add_bfm_slots(&mut ctx, &module, bfm_spec(decl.kind));
    let content = template.render_context(&ctx)?;
    Ok(RenderedComponent::new(ComponentKind::Bfm, format!("{module}.sv"), content))
}

/// Renders the full testbench: driver, monitor, scoreboard, subscriber,
/// seq_item, top, then one file per BFM instance. Refuses Blueprints that
/// fail the consistency check.
pub fn render_all(bp: &Blueprint, strategies: &StrategyMap) -> Result<Vec<RenderedComponent>, TemplateError> {
    render_all_with(TemplateLibrary::builtin(), bp, strategies)
}

pub fn render_all_with(
    lib: &TemplateLibrary,
    bp: &Blueprint,
    strategies: &StrategyMap,
) -> Result<Vec<RenderedComponent>, TemplateError> {
    let report = consistency_check(bp);
    if !report.passed() {
        return Err(TemplateError::Inconsistent(
            report.issues.iter().map(|i| i.to_string()).collect(),
        ));
    }
    let mut out = vec![render(lib.driver_for(bp.protocol)?, bp, strategies)?];
    for name in ["monitor", "scoreboard", "subscriber", "seq_item", "top"] {
        out.push(render(lib.need(name)?, bp, strategies)?);
    }
    for decl in &bp.bfms {
        out.push(render_bfm(lib, bp, decl)?);
    }
    Ok(out)
}

/// Subscriber text: one covergroup per seq_item field.
pub fn generate_covergroups(bp: &Blueprint) -> String {
    let t = TemplateLibrary::builtin()
        .get("subscriber")
        .expect("built-in subscriber template");
    t.render_context(&build_context(bp, &StrategyMap::new()))
        .expect("subscriber slots are always present")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_library_loads() {
        let lib = TemplateLibrary::builtin();
        assert_eq!(lib.names().count(), BUILTIN_SOURCES.len());
        for p in [
            Protocol::Wishbone,
            Protocol::Axi4Lite,
            Protocol::Direct(HandshakeVariant::ReadyDone),
            Protocol::Direct(HandshakeVariant::ValidReady),
            Protocol::Direct(HandshakeVariant::Busy),
            Protocol::Direct(HandshakeVariant::Streaming),
        ] {
            let t = lib.driver_for(p).unwrap();
            assert_eq!(t.kind, ComponentKind::Driver);
            assert!(t.protocol_scope.accepts(p));
        }
    }

    #[test]
    fn bfm_catalog() {
        for k in BfmKind::ALL {
            let s = bfm_spec(k);
            assert!(!s.ports.is_empty(), "{k:?}");
            assert!(!s.actions.is_empty(), "{k:?}");
            assert!(!s.smoke.is_empty(), "{k:?}");
        }
        assert!(bfm_spec(BfmKind::SdramModel).backdoor);
        assert!(bfm_spec(BfmKind::WishboneSlave).backdoor);
        assert!(!bfm_spec(BfmKind::SpiSlave).backdoor);
        assert_eq!(
            bfm_spec(BfmKind::SdramModel).action("preload").unwrap().params,
            vec!["addr", "value"]
        );
    }

    #[test]
    fn undeclared_slot_is_rejected() {
        let src = "{#\nname: x\nscope: wishbone\nkind: driver\nslots: a\n#}\n{{ a }}{{ b }}\n";
        assert!(matches!(
            Template::parse(src),
            Err(TemplateError::UndeclaredSlot { slot, .. }) if slot == "b"
        ));
    }

    #[test]
    fn header_is_required() {
        assert!(matches!(Template::parse("{{ a }}"), Err(TemplateError::Header { .. })));
        let src = "{#\nname: x\nscope: vme\nkind: driver\n#}\n";
        assert!(matches!(Template::parse(src), Err(TemplateError::Header { .. })));
    }

    #[test]
    fn protection_flags() {
        assert!(ComponentKind::Driver.is_protected());
        assert!(ComponentKind::Top.is_protected());
        assert!(ComponentKind::Bfm.is_protected());
        assert!(!ComponentKind::SeqItem.is_protected());
        assert!(!ComponentKind::SequencePkg.is_protected());
    }
}
