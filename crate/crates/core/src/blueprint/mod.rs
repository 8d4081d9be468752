// SPDX-License-Identifier: Apache-2.0

//! The Blueprint: a structured JSON description of a testbench architecture.
//!
//! A Blueprint is the only artifact an LLM contributes to Stage 1. It names
//! the protocol, the DUT ports, the transaction (`seq_item`) field contracts,
//! the register map and the peripheral BFMs. Every code generator downstream
//! reads it; none of them trusts it before [`parse_blueprint`] and
//! [`consistency_check`] have passed.

mod classify;
mod consistency;
mod parse;
mod serialize;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use classify::{classify_ports, ClassifierConfig};
pub use consistency::{consistency_check, ConsistencyIssue, ConsistencyReport, SignalLayer};
pub use parse::{parse_blueprint, parse_blueprint_with};

/// Current canonical schema version.
pub const SCHEMA_VERSION: u64 = 1;

/// Default bound on handshake wait loops in generated drivers, in clock cycles.
pub const DEFAULT_ACK_TIMEOUT: u32 = 1024;

/// Widest seq_item field or register the generators support.
pub const MAX_FIELD_WIDTH: u32 = 64;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BlueprintError {
    #[error("JSON syntax error at line {line}, column {column}: {message}")]
    JsonSyntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema violation at {path}: expected {expected}, found {found}")]
    SchemaViolation {
        path: String,
        expected: String,
        found: String,
    },
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HandshakeVariant {
    ReadyDone,
    ValidReady,
    Busy,
    Streaming,
}

impl HandshakeVariant {
    pub const ALL: [HandshakeVariant; 4] = [
        HandshakeVariant::ReadyDone,
        HandshakeVariant::ValidReady,
        HandshakeVariant::Busy,
        HandshakeVariant::Streaming,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            HandshakeVariant::ReadyDone => "ready_done",
            HandshakeVariant::ValidReady => "valid_ready",
            HandshakeVariant::Busy => "busy",
            HandshakeVariant::Streaming => "streaming",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.as_str() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Protocol {
    Direct(HandshakeVariant),
    Wishbone,
    Axi4Lite,
}

impl Protocol {
    pub fn is_bus(self) -> bool {
        !matches!(self, Protocol::Direct(_))
    }

    /// Short name used in template scopes and file names.
    pub fn scope_name(self) -> String {
        match self {
            Protocol::Direct(v) => format!("direct_{}", v.as_str()),
            Protocol::Wishbone => "wishbone".to_string(),
            Protocol::Axi4Lite => "axi4lite".to_string(),
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Protocol::Direct(v) => write!(f, "direct/{}", v.as_str()),
            Protocol::Wishbone => f.write_str("wishbone"),
            Protocol::Axi4Lite => f.write_str("axi4lite"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActiveLevel {
    High,
    Low,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResetSpec {
    pub name: String,
    pub active: ActiveLevel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PortDirection {
    Input,
    Output,
    Inout,
}

impl PortDirection {
    pub fn as_str(self) -> &'static str {
        match self {
            PortDirection::Input => "in",
            PortDirection::Output => "out",
            PortDirection::Inout => "inout",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PortClass {
    Clock,
    Reset,
    BusHandshake,
    Pad,
    Stimulus,
}

impl PortClass {
    pub fn as_str(self) -> &'static str {
        match self {
            PortClass::Clock => "clock",
            PortClass::Reset => "reset",
            PortClass::BusHandshake => "bus_handshake",
            PortClass::Pad => "pad",
            PortClass::Stimulus => "stimulus",
        }
    }
}

/// A DUT port as supplied, before classification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawPort {
    pub name: String,
    pub width: u32,
    pub direction: PortDirection,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PortDecl {
    pub name: String,
    pub width: u32,
    pub direction: PortDirection,
    pub class: PortClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldDirection {
    ToDut,
    FromDut,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldRole {
    Data,
    Config,
    Control,
    Status,
}

impl FieldRole {
    pub fn as_str(self) -> &'static str {
        match self {
            FieldRole::Data => "data",
            FieldRole::Config => "config",
            FieldRole::Control => "control",
            FieldRole::Status => "status",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CoverBinKind {
    Value(u64),
    Range { lo: u64, hi: u64 },
    AutoWidth,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverBin {
    pub name: String,
    pub kind: CoverBinKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeqItemField {
    pub name: String,
    pub width: u32,
    pub direction: FieldDirection,
    pub role: FieldRole,
    pub default_value: Option<u64>,
    pub cover_bins: Option<Vec<CoverBin>>,
}

impl SeqItemField {
    pub fn new(name: &str, width: u32, direction: FieldDirection, role: FieldRole) -> Self {
        SeqItemField {
            name: name.to_string(),
            width,
            direction,
            role,
            default_value: None,
            cover_bins: None,
        }
    }

    pub fn with_default(mut self, value: u64) -> Self {
        self.default_value = Some(value);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegisterAccess {
    Rw,
    Ro,
    Wo,
}

impl RegisterAccess {
    pub fn as_str(self) -> &'static str {
        match self {
            RegisterAccess::Rw => "rw",
            RegisterAccess::Ro => "ro",
            RegisterAccess::Wo => "wo",
        }
    }

    pub fn writable(self) -> bool {
        !matches!(self, RegisterAccess::Ro)
    }

    pub fn readable(self) -> bool {
        !matches!(self, RegisterAccess::Wo)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegisterField {
    pub name: String,
    pub lsb: u32,
    pub msb: u32,
    pub default: Option<u64>,
}

impl RegisterField {
    pub fn width(&self) -> u32 {
        self.msb - self.lsb + 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegisterDecl {
    pub name: String,
    pub address: u64,
    pub width: u32,
    pub access: RegisterAccess,
    pub fields: Vec<RegisterField>,
}

impl RegisterDecl {
    /// Reset value composed from the subfield defaults.
    pub fn default_value(&self) -> u64 {
        self.fields.iter().fold(0u64, |acc, f| {
            acc | (f.default.unwrap_or(0) & mask(f.width())) << f.lsb
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BfmKind {
    Gpio,
    I2cSlave,
    MiiPhy,
    SdramModel,
    SpiSlave,
    UartSerial,
    WishboneSlave,
}

impl BfmKind {
    pub const ALL: [BfmKind; 7] = [
        BfmKind::Gpio,
        BfmKind::I2cSlave,
        BfmKind::MiiPhy,
        BfmKind::SdramModel,
        BfmKind::SpiSlave,
        BfmKind::UartSerial,
        BfmKind::WishboneSlave,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BfmKind::Gpio => "gpio",
            BfmKind::I2cSlave => "i2c_slave",
            BfmKind::MiiPhy => "mii_phy",
            BfmKind::SdramModel => "sdram_model",
            BfmKind::SpiSlave => "spi_slave",
            BfmKind::UartSerial => "uart_serial",
            BfmKind::WishboneSlave => "wishbone_slave",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BfmDecl {
    pub kind: BfmKind,
    pub instance_name: String,
    /// BFM port -> DUT port.
    pub connections: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonitorSignal {
    pub signal: String,
    pub width: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentSpec {
    pub name: String,
    pub active: bool,
    pub monitor: Vec<MonitorSignal>,
    pub coverpoints: Vec<String>,
}

/// Where a seq_item field lands in the DUT.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FieldTarget<'a> {
    Port(&'a PortDecl),
    RegisterField {
        register: &'a RegisterDecl,
        field: &'a RegisterField,
    },
    Register(&'a RegisterDecl),
}

impl FieldTarget<'_> {
    pub fn width(&self) -> u32 {
        match self {
            FieldTarget::Port(p) => p.width,
            FieldTarget::RegisterField { field, .. } => field.width(),
            FieldTarget::Register(r) => r.width,
        }
    }
}

/// Wishbone slave-side port names resolved from the port list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WishbonePorts {
    pub cyc: String,
    pub stb: String,
    pub ack: String,
    pub we: String,
    pub adr: String,
    pub dat_w: String,
    pub dat_r: String,
    pub sel: Option<String>,
    pub err: Option<String>,
}

/// AXI4-Lite slave-side port names resolved from the port list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AxiLitePorts {
    pub awaddr: String,
    pub awvalid: String,
    pub awready: String,
    pub wdata: String,
    pub wstrb: Option<String>,
    pub wvalid: String,
    pub wready: String,
    pub bresp: Option<String>,
    pub bvalid: String,
    pub bready: String,
    pub araddr: String,
    pub arvalid: String,
    pub arready: String,
    pub rdata: String,
    pub rresp: Option<String>,
    pub rvalid: String,
    pub rready: String,
}

/// Handshake port names for the direct (bus-less) interface variants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectPorts {
    pub variant: HandshakeVariant,
    pub start: Option<String>,
    pub valid: Option<String>,
    pub ready: Option<String>,
    pub done: Option<String>,
    pub busy: Option<String>,
    pub last: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BusInterface {
    Wishbone(WishbonePorts),
    Axi4Lite(AxiLitePorts),
    Direct(DirectPorts),
}

/// Names of the seq_item members that carry a bus transaction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BusItemFields {
    pub addr: String,
    pub addr_width: u32,
    pub wdata: String,
    pub rdata: String,
    pub data_width: u32,
    pub write: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Blueprint {
    pub schema_version: u64,
    pub design_name: String,
    pub protocol: Protocol,
    pub clock_signal: String,
    pub reset: ResetSpec,
    pub agents: Vec<AgentSpec>,
    pub seq_item_fields: Vec<SeqItemField>,
    pub register_map: Vec<RegisterDecl>,
    pub bfms: Vec<BfmDecl>,
    pub raw_port_list: Vec<PortDecl>,
    pub ack_timeout_cycles: u32,
    pub bus: BusInterface,
}

impl Blueprint {
    pub fn port(&self, name: &str) -> Option<&PortDecl> {
        self.raw_port_list.iter().find(|p| p.name == name)
    }

    pub fn field(&self, name: &str) -> Option<&SeqItemField> {
        self.seq_item_fields.iter().find(|f| f.name == name)
    }

    pub fn register_by_addr(&self, address: u64) -> Option<&RegisterDecl> {
        self.register_map.iter().find(|r| r.address == address)
    }

    pub fn register(&self, name: &str) -> Option<&RegisterDecl> {
        self.register_map.iter().find(|r| r.name == name)
    }

    pub fn bfm(&self, instance: &str) -> Option<&BfmDecl> {
        self.bfms.iter().find(|b| b.instance_name == instance)
    }

    /// All places a field name could resolve to. More than one is ambiguous.
    pub fn field_targets(&self, name: &str) -> Vec<FieldTarget<'_>> {
        let mut out = Vec::new();
        if let Some(p) = self.port(name) {
            out.push(FieldTarget::Port(p));
        }
        for reg in &self.register_map {
            if reg.fields.is_empty() && reg.name == name {
                out.push(FieldTarget::Register(reg));
            }
            for f in &reg.fields {
                if f.name == name {
                    out.push(FieldTarget::RegisterField {
                        register: reg,
                        field: f,
                    });
                }
            }
        }
        out
    }

    pub fn field_target(&self, name: &str) -> Option<FieldTarget<'_>> {
        let mut targets = self.field_targets(name);
        if targets.len() == 1 {
            targets.pop()
        } else {
            None
        }
    }

    /// Seq_item members used for register transactions, if the protocol has a bus.
    pub fn bus_item_fields(&self) -> Option<BusItemFields> {
        let width = |n: &str| self.port(n).map(|p| p.width).unwrap_or(32);
        match &self.bus {
            BusInterface::Wishbone(wb) => Some(BusItemFields {
                addr: wb.adr.clone(),
                addr_width: width(&wb.adr),
                wdata: wb.dat_w.clone(),
                rdata: wb.dat_r.clone(),
                data_width: width(&wb.dat_w),
                write: wb.we.clone(),
            }),
            BusInterface::Axi4Lite(axi) => Some(BusItemFields {
                addr: axi.awaddr.clone(),
                addr_width: width(&axi.awaddr),
                wdata: axi.wdata.clone(),
                rdata: axi.rdata.clone(),
                data_width: width(&axi.wdata),
                write: "axi_write".to_string(),
            }),
            BusInterface::Direct(_) => None,
        }
    }

    /// Ports whose class makes them off-limits to sequences.
    pub fn non_stimulus_ports(&self) -> impl Iterator<Item = &PortDecl> {
        self.raw_port_list
            .iter()
            .filter(|p| p.class != PortClass::Stimulus)
    }

    pub fn to_json(&self) -> String {
        serialize::to_json_string(self)
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serialize::to_json_value(self)
    }
}

/// All-ones mask for `width` bits (saturating at 64).
pub fn mask(width: u32) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

pub fn fits_width(value: u64, width: u32) -> bool {
    value & !mask(width) == 0
}

pub fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_saturates() {
        assert_eq!(mask(1), 1);
        assert_eq!(mask(8), 0xff);
        assert_eq!(mask(64), u64::MAX);
        assert!(fits_width(255, 8));
        assert!(!fits_width(256, 8));
    }

    #[test]
    fn identifiers() {
        assert!(is_identifier("wb_adr_i"));
        assert!(is_identifier("_x1"));
        assert!(!is_identifier("1x"));
        assert!(!is_identifier(""));
        assert!(!is_identifier("a-b"));
    }

    #[test]
    fn register_default_composes_subfields() {
        let reg = RegisterDecl {
            name: "ctrl".into(),
            address: 0,
            width: 8,
            access: RegisterAccess::Rw,
            fields: vec![
                RegisterField {
                    name: "en".into(),
                    lsb: 0,
                    msb: 0,
                    default: Some(1),
                },
                RegisterField {
                    name: "mode".into(),
                    lsb: 4,
                    msb: 6,
                    default: Some(5),
                },
            ],
        };
        assert_eq!(reg.default_value(), 0x51);
    }
}
