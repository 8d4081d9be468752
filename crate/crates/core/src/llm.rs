// SPDX-License-Identifier: Apache-2.0

//! LLM backends.
//!
//! The pipeline asks an LLM for exactly three things, all answered in JSON:
//! a Blueprint, a DSL document, and edits to the two non-protected file
//! kinds during compile repair. Responses are opaque text here; every
//! consumer validates them again.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Default environment variable holding the HTTP backend's API key.
pub const DEFAULT_API_KEY_ENV: &str = "HAVEN_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LlmPurpose {
    ExtractBlueprint,
    GenerateDsl,
    ProposeFix,
}

impl LlmPurpose {
    pub const ALL: [LlmPurpose; 3] = [LlmPurpose::ExtractBlueprint, LlmPurpose::GenerateDsl, LlmPurpose::ProposeFix];

    pub fn as_str(self) -> &'static str {
        match self {
            LlmPurpose::ExtractBlueprint => "extract_blueprint",
            LlmPurpose::GenerateDsl => "generate_dsl",
            LlmPurpose::ProposeFix => "propose_fix",
        }
    }
}

impl fmt::Display for LlmPurpose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LlmError {
    #[error("no scripted response for {purpose} call {index} (expected {path})")]
    ScriptExhausted {
        purpose: LlmPurpose,
        index: usize,
        path: String,
    },
    #[error("LLM backend unavailable: {0}")]
    Unavailable(String),
    #[error("environment variable {0} is not set")]
    MissingApiKey(String),
    #[error("malformed LLM response: {0}")]
    BadResponse(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmCall {
    pub purpose: LlmPurpose,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenTotals {
    pub calls: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

/// Price per million tokens, for optional cost reporting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenRates {
    pub input_per_million: f64,
    pub output_per_million: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenLedger {
    pub calls: Vec<LlmCall>,
}

impl TokenLedger {
    pub fn record(&mut self, purpose: LlmPurpose, input_tokens: u64, output_tokens: u64) {
        self.calls.push(LlmCall {
            purpose,
            input_tokens,
            output_tokens,
        });
    }

    pub fn totals(&self) -> TokenTotals {
        self.calls.iter().fold(TokenTotals::default(), |mut t, c| {
            t.calls += 1;
            t.input_tokens += c.input_tokens;
            t.output_tokens += c.output_tokens;
            t
        })
    }

    pub fn by_purpose(&self) -> BTreeMap<LlmPurpose, TokenTotals> {
        let mut out = BTreeMap::new();
        for c in &self.calls {
            let t: &mut TokenTotals = out.entry(c.purpose).or_default();
            t.calls += 1;
            t.input_tokens += c.input_tokens;
            t.output_tokens += c.output_tokens;
        }
        out
    }

    pub fn count(&self, purpose: LlmPurpose) -> usize {
        self.calls.iter().filter(|c| c.purpose == purpose).count()
    }

    pub fn cost(&self, rates: &TokenRates) -> f64 {
        let t = self.totals();
        (t.input_tokens as f64 * rates.input_per_million + t.output_tokens as f64 * rates.output_per_million) / 1e6
    }

    /// The `token_ledger.json` artifact.
    pub fn to_json(&self, rates: Option<&TokenRates>) -> String {
        let by_purpose: BTreeMap<&str, TokenTotals> =
            self.by_purpose().into_iter().map(|(p, t)| (p.as_str(), t)).collect();
        let mut v = json!({
            "calls": self.calls,
            "by_purpose": by_purpose,
            "totals": self.totals(),
        });
        if let Some(r) = rates {
            v["rates"] = json!(r);
            v["cost"] = json!(self.cost(r));
        }
        serde_json::to_string_pretty(&v).expect("ledger serializes")
    }
}

/// Rough token count for backends that do not report usage.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

/// A file replacement proposed during compile repair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEdit {
    pub file: String,
    pub content: String,
}

/// A file offered to the repair prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EditableFile<'a> {
    pub name: &'a str,
    pub content: &'a str,
}

/// Something that turns a prompt into text. The typed entry points below
/// build the prompts; backends only move strings.
pub trait LlmClient {
    fn complete(&mut self, purpose: LlmPurpose, system: &str, prompt: &str) -> Result<String, LlmError>;

    fn ledger(&self) -> &TokenLedger;

    fn extract_blueprint(&mut self, spec_text: &str, previous_errors: &[String]) -> Result<String, LlmError> {
        let mut prompt = format!("{BLUEPRINT_SCHEMA_BLOCK}\n\n## Design specification\n{spec_text}\n");
        if !previous_errors.is_empty() {
            prompt.push_str("\n## Your previous Blueprint was rejected\n");
            for e in previous_errors {
                prompt.push_str(&format!("- {e}\n"));
            }
            prompt.push_str("Return a corrected Blueprint.\n");
        }
        self.complete(LlmPurpose::ExtractBlueprint, SYSTEM_EXTRACT, &prompt)
    }

    fn generate_dsl(&mut self, gap_prompt: &str) -> Result<String, LlmError> {
        self.complete(LlmPurpose::GenerateDsl, SYSTEM_DSL, gap_prompt)
    }

    /// Only the files passed in may be edited; the caller enforces that
    /// again on the reply.
    fn propose_fix(&mut self, error_log: &str, files: &[EditableFile<'_>]) -> Result<Vec<FileEdit>, LlmError> {
        let mut prompt = format!("## Compiler output\n{error_log}\n\n## Files you may edit\n");
        for f in files {
            prompt.push_str(&format!("### {}\n{}\n", f.name, f.content));
        }
        prompt.push_str(FIX_FORMAT_BLOCK);
        let reply = self.complete(LlmPurpose::ProposeFix, SYSTEM_FIX, &prompt)?;
        parse_edits(&reply)
    }
}

const SYSTEM_EXTRACT: &str = "You extract hardware design facts into JSON. Reply with JSON only.";
const SYSTEM_DSL: &str = "You write verification stimulus as JSON sequence documents. Reply with JSON only.";
const SYSTEM_FIX: &str = "You repair SystemVerilog compile errors in the files offered. Reply with JSON only.";

pub const BLUEPRINT_SCHEMA_BLOCK: &str = r#"Describe the design as one JSON object with these keys:
  schema_version: 1
  design_name: identifier
  protocol: {"type": "wishbone"} | {"type": "axi4lite"} | {"type": "direct", "variant": "ready_done"|"valid_ready"|"busy"|"streaming"}
  clock: clock port name
  reset: {"name": port, "active": "high"|"low"}
  ports: [{"name", "width", "dir": "in"|"out"|"inout"}] - every top-level port
  seq_item_fields: [{"name", "width", "direction": "to_dut"|"from_dut", "role": "data"|"config"|"control"|"status", "default"?: int, "cover_bins"?: [...]}]
  registers: [{"name", "addr", "width", "access": "rw"|"ro"|"wo", "fields"?: [{"name", "lsb", "msb", "default"?}]}]
  bfms: [{"kind", "name", "connections": {bfm_port: dut_port}}]
  agents?: [{"name", "active", "monitor": [{"signal", "width"}], "coverpoints": [field names]}]
  ack_timeout_cycles?: int
Every seq_item field must name a port or a register field. Use names exactly as the specification spells them."#;

const FIX_FORMAT_BLOCK: &str = r#"
Reply with {"edits": [{"file": "<name from the list above>", "content": "<full new file text>"}]}.
Only the files listed above can be changed."#;

/// Parses a repair reply: `{"edits": [...]}` or a bare list of edits.
pub fn parse_edits(reply: &str) -> Result<Vec<FileEdit>, LlmError> {
    let v: Value = serde_json::from_str(strip_fences(reply)).map_err(|e| LlmError::BadResponse(e.to_string()))?;
    let list = match &v {
        Value::Array(_) => v.clone(),
        Value::Object(m) => m
            .get("edits")
            .cloned()
            .ok_or_else(|| LlmError::BadResponse("missing `edits`".into()))?,
        _ => return Err(LlmError::BadResponse("expected an object with `edits`".into())),
    };
    serde_json::from_value(list).map_err(|e| LlmError::BadResponse(e.to_string()))
}

/// Drops a surrounding Markdown code fence, which chat models add even when
/// told not to.
pub fn strip_fences(text: &str) -> &str {
    let t = text.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    let rest = rest.split_once('\n').map(|(_, r)| r).unwrap_or("");
    rest.trim_end().strip_suffix("```").unwrap_or(rest).trim()
}

// ---- scripted ---------------------------------------------------------

/// Replays canned responses. From a directory, call `n` (1-based) of a
/// purpose reads `<purpose>_<n>.json` (or `.txt`).
#[derive(Debug, Clone, Default)]
pub struct ScriptedLlm {
    dir: Option<PathBuf>,
    queues: BTreeMap<LlmPurpose, VecDeque<String>>,
    counters: BTreeMap<LlmPurpose, usize>,
    ledger: TokenLedger,
    /// Prompts seen, in order; tests inspect these.
    pub prompts: Vec<(LlmPurpose, String)>,
}

impl ScriptedLlm {
    pub fn from_dir(dir: &Path) -> Result<Self, LlmError> {
        if !dir.is_dir() {
            return Err(LlmError::Unavailable(format!("script directory {} not found", dir.display())));
        }
        Ok(ScriptedLlm {
            dir: Some(dir.to_path_buf()),
            ..Default::default()
        })
    }

    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, purpose: LlmPurpose, response: impl Into<String>) -> &mut Self {
        self.queues.entry(purpose).or_default().push_back(response.into());
        self
    }

    pub fn with(mut self, purpose: LlmPurpose, response: impl Into<String>) -> Self {
        self.push(purpose, response);
        self
    }

    fn next(&mut self, purpose: LlmPurpose) -> Result<String, LlmError> {
        let n = self.counters.entry(purpose).or_default();
        *n += 1;
        let index = *n;
        if let Some(r) = self.queues.get_mut(&purpose).and_then(|q| q.pop_front()) {
            return Ok(r);
        }
        let Some(dir) = &self.dir else {
            return Err(LlmError::ScriptExhausted {
                purpose,
                index,
                path: format!("{purpose}_{index}.json"),
            });
        };
        for ext in ["json", "txt"] {
            let p = dir.join(format!("{purpose}_{index}.{ext}"));
            if p.is_file() {
                return std::fs::read_to_string(&p).map_err(|e| LlmError::Unavailable(format!("{}: {e}", p.display())));
            }
        }
        Err(LlmError::ScriptExhausted {
            purpose,
            index,
            path: dir.join(format!("{purpose}_{index}.json")).display().to_string(),
        })
    }
}

impl LlmClient for ScriptedLlm {
    fn complete(&mut self, purpose: LlmPurpose, system: &str, prompt: &str) -> Result<String, LlmError> {
        self.prompts.push((purpose, prompt.to_string()));
        let reply = self.next(purpose)?;
        self.ledger.record(
            purpose,
            estimate_tokens(system) + estimate_tokens(prompt),
            estimate_tokens(&reply),
        );
        Ok(reply)
    }

    fn ledger(&self) -> &TokenLedger {
        &self.ledger
    }
}

// ---- HTTP -------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpLlmConfig {
    /// Full URL of a chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub temperature: f64,
}

impl Default for HttpLlmConfig {
    fn default() -> Self {
        HttpLlmConfig {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4o".into(),
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            timeout_secs: 300,
            temperature: 0.0,
        }
    }
}

/// Chat-completions client. The API key is read from the environment when
/// the client is built and never logged.
pub struct HttpLlm {
    cfg: HttpLlmConfig,
    api_key: String,
    client: reqwest::blocking::Client,
    ledger: TokenLedger,
}

impl HttpLlm {
    pub fn from_env(cfg: HttpLlmConfig) -> Result<Self, LlmError> {
        let api_key = std::env::var(&cfg.api_key_env)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| LlmError::MissingApiKey(cfg.api_key_env.clone()))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| LlmError::Unavailable(e.to_string()))?;
        Ok(HttpLlm {
            cfg,
            api_key,
            client,
            ledger: TokenLedger::default(),
        })
    }

    pub fn request_body(&self, system: &str, prompt: &str) -> Value {
        json!({
            "model": self.cfg.model,
            "temperature": self.cfg.temperature,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": prompt},
            ],
        })
    }
}

/// Pulls the reply text and token usage out of a chat-completions response.
pub fn parse_chat_response(body: &Value) -> Result<(String, Option<(u64, u64)>), LlmError> {
    let text = body
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| LlmError::BadResponse("no choices[0].message.content".into()))?;
    let usage = match (
        body.pointer("/usage/prompt_tokens").and_then(Value::as_u64),
        body.pointer("/usage/completion_tokens").and_then(Value::as_u64),
    ) {
        (Some(i), Some(o)) => Some((i, o)),
        _ => None,
    };
    Ok((text.to_string(), usage))
}

impl LlmClient for HttpLlm {
    fn complete(&mut self, purpose: LlmPurpose, system: &str, prompt: &str) -> Result<String, LlmError> {
        let resp = self
            .client
            .post(&self.cfg.endpoint)
            .bearer_auth(&self.api_key)
            .json(&self.request_body(system, prompt))
            .send()
            .map_err(|e| LlmError::Unavailable(e.without_url().to_string()))?;
        let status = resp.status();
        let body: Value = resp.json().map_err(|e| LlmError::BadResponse(e.to_string()))?;
        if !status.is_success() {
            let msg = body
                .pointer("/error/message")
                .and_then(Value::as_str)
                .unwrap_or("no error message");
            return Err(LlmError::Unavailable(format!("HTTP {status}: {msg}")));
        }
        let (text, usage) = parse_chat_response(&body)?;
        let (i, o) = usage.unwrap_or_else(|| (estimate_tokens(system) + estimate_tokens(prompt), estimate_tokens(&text)));
        self.ledger.record(purpose, i, o);
        Ok(text)
    }

    fn ledger(&self) -> &TokenLedger {
        &self.ledger
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fences() {
        assert_eq!(strip_fences("```json\n{\"a\":1}\n```"), "{\"a\":1}");
        assert_eq!(strip_fences("  {}  "), "{}");
        assert_eq!(strip_fences("```\n[]```"), "[]");
    }

    #[test]
    fn edits_shapes() {
        let e = parse_edits(r#"{"edits": [{"file": "a.sv", "content": "x"}]}"#).unwrap();
        assert_eq!(e, vec![FileEdit { file: "a.sv".into(), content: "x".into() }]);
        assert_eq!(parse_edits(r#"[{"file": "b.sv", "content": ""}]"#).unwrap().len(), 1);
        assert!(parse_edits(r#"{"fix": 1}"#).is_err());
        assert!(parse_edits("nope").is_err());
    }

    #[test]
    fn chat_response() {
        let body = json!({"choices": [{"message": {"content": "{}"}}], "usage": {"prompt_tokens": 7, "completion_tokens": 2}});
        assert_eq!(parse_chat_response(&body).unwrap(), ("{}".to_string(), Some((7, 2))));
        assert!(parse_chat_response(&json!({})).is_err());
    }

    #[test]
    fn scripted_counts_each_call_once() {
        let mut llm = ScriptedLlm::new()
            .with(LlmPurpose::GenerateDsl, "one")
            .with(LlmPurpose::GenerateDsl, "two");
        assert_eq!(llm.generate_dsl("p").unwrap(), "one");
        assert_eq!(llm.generate_dsl("p").unwrap(), "two");
        let err = llm.generate_dsl("p").unwrap_err();
        assert!(matches!(err, LlmError::ScriptExhausted { index: 3, .. }));
        assert_eq!(llm.ledger().count(LlmPurpose::GenerateDsl), 2);
        assert_eq!(llm.ledger().totals().calls, 2);
    }

    #[test]
    fn missing_key_is_reported_by_name() {
        let cfg = HttpLlmConfig {
            api_key_env: "TBFORGE_TEST_KEY_THAT_IS_NOT_SET".into(),
            ..Default::default()
        };
        assert_eq!(
            HttpLlm::from_env(cfg).err(),
            Some(LlmError::MissingApiKey("TBFORGE_TEST_KEY_THAT_IS_NOT_SET".into()))
        );
    }
}
