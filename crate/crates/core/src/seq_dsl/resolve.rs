// SPDX-License-Identifier: Apache-2.0

//! Name resolution shared by validation, filtering and code generation.

use std::fmt;

use crate::blueprint::{
    Blueprint, BusItemFields, FieldDirection, FieldTarget, PortClass, RegisterDecl,
};
use crate::strategy::{infer_strategy, StimulusStrategy};

/// Where a directed value for a field ends up.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum DriveTarget<'a> {
    /// Assigned on the transaction; the driver puts it on a port.
    Item { name: &'a str, width: u32 },
    /// Written through the bus into (part of) a register.
    Register {
        register: &'a RegisterDecl,
        lsb: u32,
        width: u32,
    },
}

impl DriveTarget<'_> {
    pub fn width(&self) -> u32 {
        match self {
            DriveTarget::Item { width, .. } | DriveTarget::Register { width, .. } => *width,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Refusal {
    NoSuchSignal,
    DriverOwned(PortClass),
    OutputField,
    BusMember,
    ReadOnlyRegister(String),
    NoBus,
}

impl fmt::Display for Refusal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Refusal::NoSuchSignal => f.write_str("no such signal in the Blueprint"),
            Refusal::DriverOwned(class) => write!(
                f,
                "{} signal; its timing belongs to the driver",
                class.as_str()
            ),
            Refusal::OutputField => f.write_str("driven by the DUT, not the sequence"),
            Refusal::BusMember => f.write_str("bus transaction member; use register steps"),
            Refusal::ReadOnlyRegister(r) => write!(f, "register `{r}` is read-only"),
            Refusal::NoBus => f.write_str("register target but the protocol has no bus"),
        }
    }
}

pub(crate) fn bus_members(bp: &Blueprint) -> Option<BusItemFields> {
    bp.bus_item_fields()
}

fn driver_owned(bp: &Blueprint, name: &str) -> Option<PortClass> {
    bp.port(name)
        .map(|p| p.class)
        .filter(|c| *c != PortClass::Stimulus)
}

fn is_bus_member(bp: &Blueprint, name: &str) -> Option<(BusItemFields, bool)> {
    let b = bus_members(bp)?;
    let hit = [&b.addr, &b.wdata, &b.rdata, &b.write]
        .into_iter()
        .any(|m| m == name);
    hit.then(|| {
        let output = b.rdata == name;
        (b, output)
    })
}

fn register_target<'a>(
    bp: &Blueprint,
    target: FieldTarget<'a>,
) -> Result<DriveTarget<'a>, Refusal> {
    let (register, lsb, width) = match target {
        FieldTarget::Port(p) => {
            return Ok(DriveTarget::Item {
                name: &p.name,
                width: p.width,
            })
        }
        FieldTarget::RegisterField { register, field } => (register, field.lsb, field.width()),
        FieldTarget::Register(r) => (r, 0, r.width),
    };
    if !bp.protocol.is_bus() {
        return Err(Refusal::NoBus);
    }
    if !register.access.writable() {
        return Err(Refusal::ReadOnlyRegister(register.name.clone()));
    }
    Ok(DriveTarget::Register {
        register,
        lsb,
        width,
    })
}

/// Resolves a field named by a sweep or toggle step.
pub(crate) fn drive_target<'a>(bp: &'a Blueprint, name: &str) -> Result<DriveTarget<'a>, Refusal> {
    if let Some(class) = driver_owned(bp, name) {
        return Err(Refusal::DriverOwned(class));
    }
    if is_bus_member(bp, name).is_some() {
        return Err(Refusal::BusMember);
    }
    if let Some(f) = bp.field(name) {
        if f.direction == FieldDirection::FromDut {
            return Err(Refusal::OutputField);
        }
        return match bp.field_target(name) {
            Some(t) => register_target(bp, t),
            // bus-less designs may carry item-only fields
            None if !bp.protocol.is_bus() => Ok(DriveTarget::Item {
                name: &f.name,
                width: f.width,
            }),
            None => Err(Refusal::NoSuchSignal),
        };
    }
    match bp.field_target(name) {
        Some(t @ (FieldTarget::Register(_) | FieldTarget::RegisterField { .. })) => register_target(bp, t),
        _ => Err(Refusal::NoSuchSignal),
    }
}

/// What to do with a randomize_send constraint on `name`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum ConstraintFate {
    Keep { width: u32 },
    Drop(String),
    Reject(Refusal),
}

pub(crate) fn constraint_fate(bp: &Blueprint, name: &str) -> ConstraintFate {
    if let Some(class) = driver_owned(bp, name) {
        return ConstraintFate::Reject(Refusal::DriverOwned(class));
    }
    if let Some((b, output)) = is_bus_member(bp, name) {
        if output {
            return ConstraintFate::Drop("read data is produced by the DUT".into());
        }
        let width = if name == b.addr {
            b.addr_width
        } else if name == b.wdata {
            b.data_width
        } else {
            1
        };
        return ConstraintFate::Keep { width };
    }
    match bp.field(name) {
        Some(f) if f.direction == FieldDirection::FromDut => {
            ConstraintFate::Drop("from_dut field is not randomized".into())
        }
        Some(f) => match infer_strategy(f) {
            StimulusStrategy::Fixed { value } => {
                ConstraintFate::Drop(format!("fixed field pinned to {value:#x}"))
            }
            _ => ConstraintFate::Keep { width: f.width },
        },
        None => ConstraintFate::Reject(Refusal::NoSuchSignal),
    }
}

/// True if `name` is anything the Blueprint declares.
pub(crate) fn known_name(bp: &Blueprint, name: &str) -> bool {
    bp.port(name).is_some()
        || bp.field(name).is_some()
        || is_bus_member(bp, name).is_some()
        || bp.register(name).is_some()
        || bp
            .register_map
            .iter()
            .any(|r| r.fields.iter().any(|f| f.name == name))
}
