// SPDX-License-Identifier: Apache-2.0

//! Protocol-aware sequence DSL.
//!
//! An LLM never writes SystemVerilog sequences directly. It writes a JSON
//! document made of ten step types; this module repairs the usual mistakes
//! ([`auto_fix`]), checks the result against the Blueprint ([`validate`]),
//! strips constraints a sequence has no business setting
//! ([`apply_safety_filters`]) and only then translates the steps into UVM
//! sequence classes ([`codegen`]).
//!
//! Canonical document shape:
//!
//! ```json
//! {"sequences": [{"name": "mdio_read", "description": "",
//!   "steps": [{"type": "register_write", "addr": 44, "value": 2}]}]}
//! ```

mod codegen;
mod filter;
mod fix;
mod parse;
mod resolve;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use codegen::{codegen, codegen_package, package_file_name, sequence_class_name, vseq_class_name, CodegenError};
pub use filter::{apply_safety_filters, FilterEvent, FilterLog};
pub use fix::{auto_fix, auto_fix_value, auto_fix_with, FixEntry, FixLog, FixRule};
pub use parse::{parse_document, screen, validate, validate_with, Screened};

pub(crate) use parse::check_step;
pub(crate) use resolve::drive_target;

/// The ten step type names, in table order.
pub const STEP_TYPES: [&str; 10] = [
    "register_write",
    "register_read",
    "poll",
    "randomize_send",
    "delay",
    "memory_write",
    "bfm_action",
    "config_sweep",
    "value_sweep",
    "toggle_pattern",
];

/// Knobs for validation and repair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DslConfig {
    /// Inserted by auto-fix when a poll has no bound.
    pub default_poll_iters: u32,
    /// Largest accepted poll bound.
    pub max_poll_iters: u32,
    /// Largest number of transactions a single sweep step may expand to.
    pub max_sweep_transactions: usize,
}

impl Default for DslConfig {
    fn default() -> Self {
        DslConfig {
            default_poll_iters: 1024,
            max_poll_iters: 65536,
            max_sweep_transactions: 4096,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DslDocument {
    pub sequences: Vec<DslSequence>,
}

impl DslDocument {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("DSL documents always serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DslSequence {
    pub name: String,
    pub description: String,
    pub steps: Vec<DslStep>,
}

impl DslSequence {
    pub fn new(name: &str, description: &str, steps: Vec<DslStep>) -> Self {
        DslSequence {
            name: name.to_string(),
            description: description.to_string(),
            steps,
        }
    }

    /// One line per step, used in gap prompts and logs.
    pub fn summary(&self) -> String {
        let steps: Vec<String> = self.steps.iter().map(|s| s.summary()).collect();
        format!("{}: {}", self.name, steps.join("; "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TogglePattern {
    WalkingOne,
    WalkingZero,
    Alternating,
}

impl TogglePattern {
    pub const ALL: [TogglePattern; 3] = [
        TogglePattern::WalkingOne,
        TogglePattern::WalkingZero,
        TogglePattern::Alternating,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TogglePattern::WalkingOne => "walking_one",
            TogglePattern::WalkingZero => "walking_zero",
            TogglePattern::Alternating => "alternating",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.as_str() == name)
    }

    /// Values driven for a `width`-bit field, in emission order.
    pub fn values(self, width: u32) -> Vec<u64> {
        let all = crate::blueprint::mask(width);
        match self {
            TogglePattern::WalkingOne => (0..width).map(|i| 1u64 << i).collect(),
            TogglePattern::WalkingZero => (0..width).map(|i| all ^ (1u64 << i)).collect(),
            TogglePattern::Alternating => vec![0x5555_5555_5555_5555 & all, 0xAAAA_AAAA_AAAA_AAAA & all],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Relation {
    Eq { value: u64 },
    InSet { values: Vec<u64> },
    InRange { lo: u64, hi: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Constraint {
    pub field: String,
    #[serde(flatten)]
    pub relation: Relation,
}

impl Constraint {
    pub fn eq(field: &str, value: u64) -> Self {
        Constraint {
            field: field.to_string(),
            relation: Relation::Eq { value },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SweepField {
    pub field: String,
    pub values: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DslStep {
    RegisterWrite {
        addr: u64,
        value: u64,
    },
    RegisterRead {
        addr: u64,
        store_as: String,
    },
    Poll {
        addr: u64,
        mask: u64,
        expected: u64,
        max_iters: u32,
        interval_cycles: u32,
    },
    RandomizeSend {
        constraints: Vec<Constraint>,
    },
    Delay {
        cycles: u32,
    },
    MemoryWrite {
        bfm: String,
        base_addr: u64,
        data: Vec<u64>,
    },
    BfmAction {
        bfm: String,
        action: String,
        params: BTreeMap<String, u64>,
    },
    ConfigSweep {
        fields: Vec<SweepField>,
    },
    ValueSweep {
        field: String,
        values: Vec<u64>,
    },
    TogglePattern {
        field: String,
        pattern: TogglePattern,
    },
}

impl DslStep {
    pub fn type_name(&self) -> &'static str {
        match self {
            DslStep::RegisterWrite { .. } => "register_write",
            DslStep::RegisterRead { .. } => "register_read",
            DslStep::Poll { .. } => "poll",
            DslStep::RandomizeSend { .. } => "randomize_send",
            DslStep::Delay { .. } => "delay",
            DslStep::MemoryWrite { .. } => "memory_write",
            DslStep::BfmAction { .. } => "bfm_action",
            DslStep::ConfigSweep { .. } => "config_sweep",
            DslStep::ValueSweep { .. } => "value_sweep",
            DslStep::TogglePattern { .. } => "toggle_pattern",
        }
    }

    pub fn summary(&self) -> String {
        use crate::num::hex;
        match self {
            DslStep::RegisterWrite { addr, value } => format!("register_write {} <= {}", hex(*addr), hex(*value)),
            DslStep::RegisterRead { addr, store_as } => format!("register_read {} -> {store_as}", hex(*addr)),
            DslStep::Poll {
                addr,
                mask,
                expected,
                max_iters,
                ..
            } => format!(
                "poll {} & {} == {} (max {max_iters})",
                hex(*addr),
                hex(*mask),
                hex(*expected)
            ),
            DslStep::RandomizeSend { constraints } => {
                let names: Vec<&str> = constraints.iter().map(|c| c.field.as_str()).collect();
                format!("randomize_send [{}]", names.join(", "))
            }
            DslStep::Delay { cycles } => format!("delay {cycles}"),
            DslStep::MemoryWrite { bfm, base_addr, data } => {
                format!("memory_write {bfm} @{} x{}", hex(*base_addr), data.len())
            }
            DslStep::BfmAction { bfm, action, .. } => format!("bfm_action {bfm}.{action}"),
            DslStep::ConfigSweep { fields } => {
                let names: Vec<&str> = fields.iter().map(|f| f.field.as_str()).collect();
                format!("config_sweep [{}]", names.join(", "))
            }
            DslStep::ValueSweep { field, values } => format!("value_sweep {field} x{}", values.len()),
            DslStep::TogglePattern { field, pattern } => format!("toggle_pattern {field} {}", pattern.as_str()),
        }
    }
}

/// Validation and repair errors. `path` is a JSON path such as
/// `sequences[0].steps[1].addr`.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DslError {
    #[error("JSON syntax error at line {line}, column {column}: {message}")]
    JsonSyntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("{path}: unknown step type `{name}`")]
    UnknownStepType { path: String, name: String },
    #[error("{path}: `{name}` needs control flow the DSL does not have")]
    Expressiveness { path: String, name: String },
    #[error("{path}: unknown key `{key}`")]
    UnknownKey { path: String, key: String },
    #[error("{path}: `{key}` carries HDL text; documents may only hold DSL steps")]
    CodePayload { path: String, key: String },
    #[error("{path}: no register at {name}")]
    UnknownRegister { path: String, name: String },
    #[error("{path}: unknown field `{name}`")]
    UnknownField { path: String, name: String },
    #[error("{path}: unknown BFM instance `{name}`")]
    UnknownBfm { path: String, name: String },
    #[error("{path}: BFM `{bfm}` has no action `{action}`")]
    UnknownAction {
        path: String,
        bfm: String,
        action: String,
    },
    #[error("{path}: value {value:#x} does not fit `{field}`")]
    ValueOverflow { path: String, field: String, value: u64 },
    #[error("{path}: poll needs max_iters between 1 and the configured cap")]
    UnboundedPoll { path: String },
    #[error("{path}: register `{register}` is {access}")]
    AccessViolation {
        path: String,
        register: String,
        access: String,
    },
    #[error("{path}: {message}")]
    InvalidValue { path: String, message: String },
    #[error("duplicate sequence name `{0}`")]
    DuplicateName(String),
}

impl DslError {
    pub fn schema(path: impl fmt::Display, message: impl Into<String>) -> Self {
        DslError::Schema {
            path: path.to_string(),
            message: message.into(),
        }
    }

    pub fn invalid(path: impl fmt::Display, message: impl Into<String>) -> Self {
        DslError::InvalidValue {
            path: path.to_string(),
            message: message.into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toggle_values() {
        assert_eq!(TogglePattern::WalkingOne.values(4), vec![1, 2, 4, 8]);
        assert_eq!(TogglePattern::WalkingZero.values(4), vec![0xE, 0xD, 0xB, 0x7]);
        assert_eq!(TogglePattern::Alternating.values(4), vec![0x5, 0xA]);
        assert_eq!(TogglePattern::Alternating.values(1), vec![1, 0]);
    }

    #[test]
    fn canonical_serialization() {
        let doc = DslDocument {
            sequences: vec![DslSequence::new(
                "s",
                "",
                vec![
                    DslStep::RegisterWrite { addr: 0x2c, value: 2 },
                    DslStep::RandomizeSend {
                        constraints: vec![Constraint {
                            field: "f".into(),
                            relation: Relation::InRange { lo: 1, hi: 3 },
                        }],
                    },
                ],
            )],
        };
        let v: serde_json::Value = serde_json::from_str(&doc.to_json()).unwrap();
        assert_eq!(v["sequences"][0]["steps"][0]["type"], "register_write");
        assert_eq!(v["sequences"][0]["steps"][0]["addr"], 44);
        assert_eq!(
            v["sequences"][0]["steps"][1]["constraints"][0],
            serde_json::json!({"field": "f", "op": "in_range", "lo": 1, "hi": 3})
        );
    }
}
