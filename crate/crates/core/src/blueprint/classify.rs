// SPDX-License-Identifier: Apache-2.0

//! Port classification. Decides which DUT ports a sequence may never drive.

use glob::Pattern;
use serde::{Deserialize, Serialize};

use super::{HandshakeVariant, PortClass, PortDecl, Protocol, RawPort};

/// Lexicons used by [`classify_ports`]. Clock, reset and pad entries are glob
/// patterns matched against the lower-cased port name; handshake entries are
/// `_`-separated name tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub clock: Vec<String>,
    pub reset: Vec<String>,
    pub pad: Vec<String>,
    pub wishbone_handshake: Vec<String>,
    pub axi4lite_handshake: Vec<String>,
    pub direct_ready_done: Vec<String>,
    pub direct_valid_ready: Vec<String>,
    pub direct_busy: Vec<String>,
    pub direct_streaming: Vec<String>,
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            clock: strings(&[
                "clk", "clock", "*_clk", "clk_*", "*_clk_*", "*_clock", "clock_*",
            ]),
            reset: strings(&["rst", "reset", "*_rst*", "rst_*", "*rstn*", "*reset*"]),
            pad: strings(&["*_pad", "pad_*", "*_pad_*", "*_io"]),
            wishbone_handshake: strings(&["cyc", "stb", "ack", "err", "rty"]),
            axi4lite_handshake: strings(&[
                "awvalid", "awready", "wvalid", "wready", "bvalid", "bready", "arvalid",
                "arready", "rvalid", "rready", "bresp", "rresp", "wstrb", "awprot", "arprot",
            ]),
            direct_ready_done: strings(&["start", "ready", "done"]),
            direct_valid_ready: strings(&["valid", "ready"]),
            direct_busy: strings(&["start", "busy"]),
            direct_streaming: strings(&["valid", "ready", "last"]),
        }
    }
}

impl ClassifierConfig {
    pub fn handshake_tokens(&self, protocol: Protocol) -> &[String] {
        match protocol {
            Protocol::Wishbone => &self.wishbone_handshake,
            Protocol::Axi4Lite => &self.axi4lite_handshake,
            Protocol::Direct(HandshakeVariant::ReadyDone) => &self.direct_ready_done,
            Protocol::Direct(HandshakeVariant::ValidReady) => &self.direct_valid_ready,
            Protocol::Direct(HandshakeVariant::Busy) => &self.direct_busy,
            Protocol::Direct(HandshakeVariant::Streaming) => &self.direct_streaming,
        }
    }

    /// Class for a single port name. Priority: clock > reset > bus_handshake > pad > stimulus.
    pub fn classify_name(&self, name: &str, protocol: Protocol) -> PortClass {
        let lower = name.to_ascii_lowercase();
        if matches_any(&self.clock, &lower) {
            PortClass::Clock
        } else if matches_any(&self.reset, &lower) {
            PortClass::Reset
        } else if has_token(self.handshake_tokens(protocol), &lower) {
            PortClass::BusHandshake
        } else if matches_any(&self.pad, &lower) {
            PortClass::Pad
        } else {
            PortClass::Stimulus
        }
    }
}

fn matches_any(patterns: &[String], name: &str) -> bool {
    patterns.iter().any(|p| match Pattern::new(p) {
        Ok(pat) => pat.matches(name),
        Err(_) => p == name,
    })
}

fn has_token(tokens: &[String], name: &str) -> bool {
    name.split('_').any(|t| tokens.iter().any(|h| h == t))
}

/// Assigns exactly one class to every port. Total and deterministic in
/// `(name, protocol)`; already-classified ports are reclassified from scratch.
pub fn classify_ports(
    raw_ports: &[RawPort],
    protocol: Protocol,
    config: &ClassifierConfig,
) -> Vec<PortDecl> {
    raw_ports
        .iter()
        .map(|p| PortDecl {
            name: p.name.clone(),
            width: p.width,
            direction: p.direction,
            class: config.classify_name(&p.name, protocol),
        })
        .collect()
}
