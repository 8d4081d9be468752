// SPDX-License-Identifier: Apache-2.0

//! Rule-based stimulus strategy per seq_item field.
//!
//! Config fields with an explicit default are pinned (`fixed`, non-rand);
//! otherwise fields of at most four bits are swept exhaustively and wider
//! fields are left to constrained-random generation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::blueprint::{Blueprint, FieldDirection, FieldRole, SeqItemField};

/// Widest field that still gets the exhaustive sweep.
pub const ENUMERATE_MAX_WIDTH: u32 = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StimulusStrategy {
    Enumerate { values: Vec<u64> },
    Crv,
    Fixed { value: u64 },
}

impl StimulusStrategy {
    pub fn is_randomizable(&self) -> bool {
        !matches!(self, StimulusStrategy::Fixed { .. })
    }
}

pub type StrategyMap = BTreeMap<String, StimulusStrategy>;

pub fn infer_strategy(field: &SeqItemField) -> StimulusStrategy {
    match (field.role, field.default_value) {
        (FieldRole::Config, Some(value)) => StimulusStrategy::Fixed { value },
        _ if field.width <= ENUMERATE_MAX_WIDTH => StimulusStrategy::Enumerate {
            values: (0..1u64 << field.width).collect(),
        },
        _ => StimulusStrategy::Crv,
    }
}

/// Strategies for every `to_dut` field; `from_dut` fields get none.
pub fn infer_all(bp: &Blueprint) -> StrategyMap {
    bp.seq_item_fields
        .iter()
        .filter(|f| f.direction == FieldDirection::ToDut)
        .map(|f| (f.name.clone(), infer_strategy(f)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blueprint::FieldDirection::ToDut;

    fn field(role: FieldRole, width: u32, default: Option<u64>) -> SeqItemField {
        SeqItemField {
            name: "f".into(),
            width,
            direction: ToDut,
            role,
            default_value: default,
            cover_bins: None,
        }
    }

    #[test]
    fn width_four_enumerates_sixteen() {
        let s = infer_strategy(&field(FieldRole::Data, 4, None));
        assert_eq!(
            s,
            StimulusStrategy::Enumerate {
                values: (0..16).collect()
            }
        );
    }

    #[test]
    fn width_five_is_crv() {
        assert_eq!(infer_strategy(&field(FieldRole::Data, 5, None)), StimulusStrategy::Crv);
    }

    #[test]
    fn config_default_pins_even_when_narrow() {
        assert_eq!(
            infer_strategy(&field(FieldRole::Config, 2, Some(1))),
            StimulusStrategy::Fixed { value: 1 }
        );
    }

    #[test]
    fn single_bit() {
        assert_eq!(
            infer_strategy(&field(FieldRole::Data, 1, None)),
            StimulusStrategy::Enumerate { values: vec![0, 1] }
        );
    }

    #[test]
    fn data_default_is_not_pinned() {
        // only config fields are pinned by a default
        assert!(matches!(
            infer_strategy(&field(FieldRole::Data, 2, Some(1))),
            StimulusStrategy::Enumerate { .. }
        ));
    }

    #[test]
    fn wide_config_without_default_falls_to_crv() {
        assert_eq!(infer_strategy(&field(FieldRole::Config, 12, None)), StimulusStrategy::Crv);
    }
}
