// SPDX-License-Identifier: Apache-2.0

//! Unsigned integer literals as they show up in hand- and LLM-written JSON.

/// Parses `26`, `0x1A`, `0b11010`, `0o32`, `8'h1A`, `8'd26` and `1_000`.
pub fn parse_uint_literal(text: &str) -> Option<u64> {
    let t: String = text.trim().chars().filter(|c| *c != '_').collect();
    if t.is_empty() {
        return None;
    }
    if let Some(pos) = t.find('\'') {
        // SystemVerilog sized literal; the size prefix is informational
        let (size, rest) = t.split_at(pos);
        if !size.is_empty() && !size.chars().all(|c| c.is_ascii_digit()) {
            return None;
        }
        let rest = &rest[1..];
        let rest = rest.strip_prefix(['s', 'S']).unwrap_or(rest);
        let mut chars = rest.chars();
        let radix = match chars.next()?.to_ascii_lowercase() {
            'h' => 16,
            'd' => 10,
            'b' => 2,
            'o' => 8,
            _ => return None,
        };
        return u64::from_str_radix(chars.as_str(), radix).ok();
    }
    let lower = t.to_ascii_lowercase();
    if let Some(hex) = lower.strip_prefix("0x") {
        u64::from_str_radix(hex, 16).ok()
    } else if let Some(bin) = lower.strip_prefix("0b") {
        u64::from_str_radix(bin, 2).ok()
    } else if let Some(oct) = lower.strip_prefix("0o") {
        u64::from_str_radix(oct, 8).ok()
    } else {
        lower.parse::<u64>().ok()
    }
}

/// Canonical hex spelling used in serialized documents.
pub fn hex(value: u64) -> String {
    format!("0x{value:X}")
}

/// SystemVerilog sized hex literal, e.g. `32'h0000_002C` style without separators.
pub fn sv_hex(width: u32, value: u64) -> String {
    let digits = width.div_ceil(4).max(1) as usize;
    format!("{width}'h{value:0digits$X}")
}
