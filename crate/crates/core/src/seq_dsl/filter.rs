// SPDX-License-Identifier: Apache-2.0

//! Safety filters applied between validation and code generation.
//!
//! Constraints on fields the sequence does not control are dropped; steps
//! naming signals that do not exist, or that belong to the driver's
//! handshake, are rejected outright.

use serde::Serialize;

use super::parse::shares_transaction;
use super::resolve::{constraint_fate, drive_target, ConstraintFate, Refusal};
use super::{DslSequence, DslStep};
use crate::blueprint::Blueprint;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum FilterEvent {
    ConstraintDropped {
        step: usize,
        field: String,
        reason: String,
    },
    StepRejected {
        step: usize,
        reason: String,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct FilterLog {
    pub sequence: String,
    pub events: Vec<FilterEvent>,
}

impl FilterLog {
    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn dropped(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e, FilterEvent::ConstraintDropped { .. }))
            .count()
    }

    pub fn rejected(&self) -> Vec<usize> {
        self.events
            .iter()
            .filter_map(|e| match e {
                FilterEvent::StepRejected { step, .. } => Some(*step),
                _ => None,
            })
            .collect()
    }
}

fn refuse(name: &str, why: Refusal) -> String {
    format!("`{name}`: {why}")
}

fn check_field(bp: &Blueprint, name: &str) -> Result<(), String> {
    drive_target(bp, name).map(|_| ()).map_err(|why| refuse(name, why))
}

fn check_bfm_action(bp: &Blueprint, bfm: &str, action: &str) -> Result<(), String> {
    let decl = bp
        .bfm(bfm)
        .ok_or_else(|| format!("`{bfm}`: no such BFM instance"))?;
    crate::templates::bfm_spec(decl.kind)
        .action(action)
        .map(|_| ())
        .ok_or_else(|| format!("`{bfm}` has no action `{action}`"))
}

fn check_register(bp: &Blueprint, addr: u64, write: bool) -> Result<(), String> {
    if !bp.protocol.is_bus() {
        return Err(Refusal::NoBus.to_string());
    }
    let reg = bp
        .register_by_addr(addr)
        .ok_or_else(|| format!("no register at {}", crate::num::hex(addr)))?;
    let ok = if write { reg.access.writable() } else { reg.access.readable() };
    if ok {
        Ok(())
    } else {
        Err(format!("register `{}` is {}", reg.name, reg.access.as_str()))
    }
}

/// Filters one sequence. Rejected steps are removed and logged; the result
/// may end up with no steps, which callers treat as a rejected sequence.
pub fn apply_safety_filters(seq: &DslSequence, bp: &Blueprint) -> (DslSequence, FilterLog) {
    let mut log = FilterLog {
        sequence: seq.name.clone(),
        events: Vec::new(),
    };
    let mut steps = Vec::new();
    for (i, step) in seq.steps.iter().enumerate() {
        let verdict = match step {
            DslStep::RandomizeSend { constraints } => {
                let mut kept = Vec::new();
                let mut rejected = None;
                for c in constraints {
                    match constraint_fate(bp, &c.field) {
                        ConstraintFate::Keep { .. } => kept.push(c.clone()),
                        ConstraintFate::Drop(reason) => log.events.push(FilterEvent::ConstraintDropped {
                            step: i,
                            field: c.field.clone(),
                            reason,
                        }),
                        ConstraintFate::Reject(why) => {
                            rejected = Some(refuse(&c.field, why));
                            break;
                        }
                    }
                }
                match rejected {
                    Some(reason) => Err(reason),
                    None => Ok(DslStep::RandomizeSend { constraints: kept }),
                }
            }
            DslStep::ValueSweep { field, .. } | DslStep::TogglePattern { field, .. } => {
                check_field(bp, field).map(|_| step.clone())
            }
            DslStep::ConfigSweep { fields } => fields
                .iter()
                .try_for_each(|f| check_field(bp, &f.field))
                .and_then(|_| {
                    let targets: Vec<_> = fields.iter().map(|f| drive_target(bp, &f.field)).collect();
                    if shares_transaction(&targets) {
                        Ok(step.clone())
                    } else {
                        Err("fields span more than one transaction".to_string())
                    }
                }),
            DslStep::RegisterWrite { addr, .. } => check_register(bp, *addr, true).map(|_| step.clone()),
            DslStep::RegisterRead { addr, .. } | DslStep::Poll { addr, .. } => {
                check_register(bp, *addr, false).map(|_| step.clone())
            }
            DslStep::MemoryWrite { bfm, .. } => check_bfm_action(bp, bfm, "preload").map(|_| step.clone()),
            DslStep::BfmAction { bfm, action, .. } => check_bfm_action(bp, bfm, action).map(|_| step.clone()),
            DslStep::Delay { .. } => Ok(step.clone()),
        };
        match verdict {
            Ok(s) => steps.push(s),
            Err(reason) => log.events.push(FilterEvent::StepRejected { step: i, reason }),
        }
    }
    let filtered = DslSequence {
        name: seq.name.clone(),
        description: seq.description.clone(),
        steps,
    };
    (filtered, log)
}
