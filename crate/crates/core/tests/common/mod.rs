// SPDX-License-Identifier: Apache-2.0
#![allow(dead_code)]

pub mod triggers;

use std::path::PathBuf;

use tbforge_core::blueprint::{parse_blueprint, Blueprint};

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn blueprint_text(name: &str) -> String {
    let path = fixtures_dir().join("blueprints").join(format!("{name}.json"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn blueprint(name: &str) -> Blueprint {
    parse_blueprint(&blueprint_text(name)).unwrap_or_else(|e| panic!("{name}: {e:?}"))
}

pub const ALL_BLUEPRINTS: [&str; 15] = [
    "wb_spi",
    "wb_gpio",
    "wb_eth",
    "wb_sdram_ctrl",
    "wb_dma",
    "axi_timer",
    "axi_uart",
    "sha_core",
    "divider",
    "fifo_push",
    "crc_unit",
    "aes_core",
    "sqrt_unit",
    "stream_sum",
    "pkt_gen",
];

/// Parses a fixture after applying `edit` to its JSON.
pub fn blueprint_with(name: &str, edit: impl FnOnce(&mut serde_json::Value)) -> Blueprint {
    let mut v: serde_json::Value = serde_json::from_str(&blueprint_text(name)).unwrap();
    edit(&mut v);
    parse_blueprint(&v.to_string()).unwrap_or_else(|e| panic!("{name} (edited): {e:?}"))
}

/// Compares against `tests/golden/<name>`; `UPDATE_GOLDEN=1` rewrites it.
pub fn assert_golden(name: &str, actual: &str) {
    let path = fixtures_dir().join("../golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("{}: {e} (run with UPDATE_GOLDEN=1 to create)", path.display()));
    assert!(expected == actual, "{name} differs from golden file\n--- actual ---\n{actual}");
}
