// SPDX-License-Identifier: Apache-2.0

//! Testbench synthesis core.
//!
//! LLM backends only ever produce JSON (a [`blueprint::Blueprint`] and
//! sequence documents in the [`seq_dsl`] language); everything written in
//! SystemVerilog comes from the deterministic generators in this crate.

pub mod blueprint;
pub mod coverage;
pub mod llm;
pub mod num;
pub mod orchestrator;
pub mod predefined;
pub mod strategy;
pub mod seq_dsl;
pub mod sim;
pub mod templates;
