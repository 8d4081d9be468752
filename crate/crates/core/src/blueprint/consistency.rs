// SPDX-License-Identifier: Apache-2.0

//! Three-layer signal agreement: RTL ports, transaction fields and monitor
//! mapping must agree on names and widths before anything is generated.

use std::fmt;

use serde::Serialize;

use super::Blueprint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalLayer {
    Transaction,
    Monitor,
}

impl fmt::Display for SignalLayer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SignalLayer::Transaction => "transaction",
            SignalLayer::Monitor => "monitor",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConsistencyIssue {
    WidthMismatch {
        name: String,
        layer: SignalLayer,
        expected: u32,
        found: u32,
    },
    PhantomSignal {
        name: String,
        layer: SignalLayer,
    },
    AmbiguousSignal {
        name: String,
        candidates: usize,
    },
    PhantomCoverpoint {
        name: String,
        agent: String,
    },
}

impl fmt::Display for ConsistencyIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConsistencyIssue::WidthMismatch {
                name,
                layer,
                expected,
                found,
            } => write!(
                f,
                "width mismatch on {name} ({layer} layer): declared {expected}, RTL has {found}"
            ),
            ConsistencyIssue::PhantomSignal { name, layer } => {
                write!(f, "phantom signal {name} ({layer} layer): not in the RTL interface")
            }
            ConsistencyIssue::AmbiguousSignal { name, candidates } => {
                write!(f, "signal {name} resolves to {candidates} RTL locations")
            }
            ConsistencyIssue::PhantomCoverpoint { name, agent } => {
                write!(f, "phantom coverpoint {name} in agent {agent}: no such seq_item field")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ConsistencyReport {
    pub issues: Vec<ConsistencyIssue>,
}

impl ConsistencyReport {
    pub fn passed(&self) -> bool {
        self.issues.is_empty()
    }
}

pub fn consistency_check(bp: &Blueprint) -> ConsistencyReport {
    let mut issues = Vec::new();

    for field in &bp.seq_item_fields {
        let targets = bp.field_targets(&field.name);
        match targets.as_slice() {
            [] => issues.push(ConsistencyIssue::PhantomSignal {
                name: field.name.clone(),
                layer: SignalLayer::Transaction,
            }),
            [target] => {
                if target.width() != field.width {
                    issues.push(ConsistencyIssue::WidthMismatch {
                        name: field.name.clone(),
                        layer: SignalLayer::Transaction,
                        expected: field.width,
                        found: target.width(),
                    });
                }
            }
            many => issues.push(ConsistencyIssue::AmbiguousSignal {
                name: field.name.clone(),
                candidates: many.len(),
            }),
        }
    }

    for agent in &bp.agents {
        for sig in &agent.monitor {
            match bp.port(&sig.signal) {
                None => issues.push(ConsistencyIssue::PhantomSignal {
                    name: sig.signal.clone(),
                    layer: SignalLayer::Monitor,
                }),
                Some(p) if p.width != sig.width => issues.push(ConsistencyIssue::WidthMismatch {
                    name: sig.signal.clone(),
                    layer: SignalLayer::Monitor,
                    expected: sig.width,
                    found: p.width,
                }),
                Some(_) => {}
            }
        }
        for cp in &agent.coverpoints {
            if bp.field(cp).is_none() {
                issues.push(ConsistencyIssue::PhantomCoverpoint {
                    name: cp.clone(),
                    agent: agent.name.clone(),
                });
            }
        }
    }

    ConsistencyReport { issues }
}
