// SPDX-License-Identifier: Apache-2.0

//! Trigger predicates for predefined sequences, written against the
//! Blueprint directly and independent of the library's own detection.

use tbforge_core::blueprint::{Blueprint, FieldDirection, FieldRole};


pub fn oracle_enum(bp: &Blueprint) -> bool {
    bp.seq_item_fields.iter().any(|f| {
        f.direction == FieldDirection::ToDut
            && f.width <= 4
            && !(f.role == FieldRole::Config && f.default_value.is_some())
    })
}

pub fn oracle_toggle(bp: &Blueprint) -> bool {
    !bp.register_map.is_empty() || bp.protocol.is_bus()
}

pub fn fifo_word(name: &str) -> bool {
    name.to_lowercase()
        .split('_')
        .map(|w| w.trim_end_matches(|c: char| c.is_ascii_digit()))
        .any(|w| w == "tx" || w == "rx" || w == "fifo")
}

pub fn oracle_fifo(bp: &Blueprint) -> bool {
    bp.register_map.iter().any(|r| fifo_word(&r.name)) || bp.seq_item_fields.iter().any(|f| fifo_word(&f.name))
}

/// Brute force: the address set equals `base + i*stride + j*step` for some
/// k >= 2 banks of L >= 2 registers, with a gap between banks and bases
/// aligned to the bank span rounded up to a power of two.
pub fn oracle_bank(bp: &Blueprint) -> bool {
    let mut a: Vec<u64> = bp.register_map.iter().map(|r| r.address).collect();
    a.sort();
    a.dedup();
    let n = a.len();
    for l in 2..=n / 2 {
        if n % l != 0 {
            continue;
        }
        let k = n / l;
        let step = a[1] - a[0];
        let stride = a[l] - a[0];
        let span = l as u64 * step;
        let base = a[0];
        if step == 0 || stride <= span || a[0] % span.next_power_of_two() != 0 || stride % span.next_power_of_two() != 0 {
            continue;
        }
        let expect: Vec<u64> = (0..k)
            .flat_map(|i| (0..l).map(move |j| base + i as u64 * stride + j as u64 * step))
            .collect();
        if expect == a {
            return true;
        }
    }
    false
}

pub fn oracle_bfm(bp: &Blueprint) -> bool {
    !bp.bfms.is_empty()
}

/// (kind, should fire) in report order.
pub fn expected_triggers(bp: &Blueprint) -> [(&'static str, bool); 6] {
    [
        ("crv", true),
        ("enum", oracle_enum(bp)),
        ("toggle", oracle_toggle(bp)),
        ("fifo", oracle_fifo(bp)),
        ("bank", oracle_bank(bp)),
        ("bfm", oracle_bfm(bp)),
    ]
}
