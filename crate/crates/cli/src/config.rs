// SPDX-License-Identifier: Apache-2.0

//! Settings merged from flags, environment, config file and defaults, in
//! that order of precedence. Flags and their environment variables are
//! merged by clap; this module layers the file and defaults underneath.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use tbforge_core::llm::HttpLlmConfig;
use tbforge_core::orchestrator::RunConfig;
use tbforge_core::predefined::PredefinedConfig;
use tbforge_core::seq_dsl::DslConfig;

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub k: Option<usize>,
    pub max_fix_iterations: Option<usize>,
    pub convergence_pp: Option<f64>,
    pub out_dir: Option<PathBuf>,
    pub protocol_flows: Option<String>,
    pub dsl: Option<DslConfig>,
    pub predefined: Option<PredefinedConfig>,
    pub llm: Option<LlmSection>,
    /// `mock:<profile>` or `external:<command>`.
    pub sim: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmSection {
    /// `http` or `scripted:<dir>`.
    pub backend: Option<String>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub api_key_env: Option<String>,
    pub timeout_secs: Option<u64>,
    pub temperature: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::input(format!("config {}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LlmChoice {
    Http,
    Scripted(PathBuf),
}

impl LlmChoice {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s.split_once(':') {
            None if s == "http" => Ok(LlmChoice::Http),
            Some(("scripted", dir)) if !dir.is_empty() => Ok(LlmChoice::Scripted(PathBuf::from(dir))),
            _ => Err(CliError::input(format!(
                "unknown LLM backend `{s}` (expected `http` or `scripted:<dir>`)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SimChoice {
    Mock(PathBuf),
    External(String),
}

impl SimChoice {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s.split_once(':') {
            Some(("mock", p)) if !p.is_empty() => Ok(SimChoice::Mock(PathBuf::from(p))),
            Some(("external", c)) if !c.trim().is_empty() => Ok(SimChoice::External(c.to_string())),
            _ => Err(CliError::input(format!(
                "unknown simulator `{s}` (expected `mock:<profile>` or `external:<command>`)"
            ))),
        }
    }
}

/// Values given on the command line or through their environment
/// variables.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub k: Option<usize>,
    pub max_fix: Option<usize>,
    pub convergence_pp: Option<f64>,
    pub out: Option<PathBuf>,
    pub llm: Option<String>,
    pub sim: Option<String>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub run: RunConfig,
    pub llm: LlmChoice,
    pub http: HttpLlmConfig,
    pub sim: Option<SimChoice>,
}

pub fn resolve(file: FileConfig, o: Overrides) -> Result<Settings, CliError> {
    let d = RunConfig::default();
    let run = RunConfig {
        k: o.k.or(file.k).unwrap_or(d.k),
        max_fix_iterations: o.max_fix.or(file.max_fix_iterations).unwrap_or(d.max_fix_iterations),
        convergence_pp: o.convergence_pp.or(file.convergence_pp).unwrap_or(d.convergence_pp),
        out_dir: o.out.or(file.out_dir),
        protocol_flows: file.protocol_flows,
        dsl: file.dsl.unwrap_or_default(),
        predefined: file.predefined.unwrap_or_default(),
    };
    run.validate().map_err(CliError::input)?;

    let sec = file.llm.unwrap_or_default();
    let hd = HttpLlmConfig::default();
    let http = HttpLlmConfig {
        endpoint: o.endpoint.or(sec.endpoint).unwrap_or(hd.endpoint),
        model: o.model.or(sec.model).unwrap_or(hd.model),
        api_key_env: sec.api_key_env.unwrap_or(hd.api_key_env),
        timeout_secs: sec.timeout_secs.unwrap_or(hd.timeout_secs),
        temperature: sec.temperature.unwrap_or(hd.temperature),
    };
    let llm = LlmChoice::parse(o.llm.or(sec.backend).as_deref().unwrap_or("http"))?;
    let sim = o.sim.or(file.sim).map(|s| SimChoice::parse(&s)).transpose()?;
    Ok(Settings { run, llm, http, sim })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence() {
        let file: FileConfig = toml::from_str("k = 1\nmax_fix_iterations = 2\n[llm]\nmodel = \"m-file\"\n").unwrap();
        let s = resolve(
            file,
            Overrides {
                k: Some(4),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(s.run.k, 4);
        assert_eq!(s.run.max_fix_iterations, 2);
        assert_eq!(s.run.convergence_pp, 0.1);
        assert_eq!(s.http.model, "m-file");
        assert_eq!(s.llm, LlmChoice::Http);
        assert_eq!(s.sim, None);
    }

    #[test]
    fn unknown_keys_are_errors() {
        assert!(toml::from_str::<FileConfig>("kk = 1").is_err());
        assert!(toml::from_str::<FileConfig>("[llm]\napi_key = \"x\"").is_err());
        assert!(toml::from_str::<FileConfig>("[dsl]\nmax_poll_iters = 9\n").is_ok());
    }

    #[test]
    fn backend_strings() {
        assert_eq!(
            SimChoice::parse("external:run_vcs --fast").unwrap(),
            SimChoice::External("run_vcs --fast".into())
        );
        assert!(SimChoice::parse("mock:").is_err());
        assert!(LlmChoice::parse("openai").is_err());
    }
}
