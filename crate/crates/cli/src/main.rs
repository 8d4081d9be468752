// SPDX-License-Identifier: Apache-2.0

//! `tbforge`: testbench synthesis from a design specification.
//!
//! Exit codes: 0 success, 1 input or validation error, 2 compile-fix
//! budget exhausted, 3 Blueprint rejected.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

#[derive(Parser, Debug)]
#[command(name = "tbforge", version, about = "Generate and refine verification testbenches")]
struct Cli {
    /// Print one JSON object instead of text.
    #[arg(long, global = true)]
    json: bool,

    /// TOML config file.
    #[arg(long, global = true, env = "HAVEN_CONFIG", value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate a Blueprint JSON file, or extract one from a spec.
    Blueprint {
        /// `*.json` is read as a Blueprint; anything else as a spec.
        path: PathBuf,
        /// Write the accepted Blueprint here.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        #[command(flatten)]
        llm: LlmArgs,
    },
    /// Render the testbench for a Blueprint and lint it.
    Render {
        blueprint: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Repair, validate and compile a sequence document.
    Dsl {
        dsl: PathBuf,
        #[arg(long, value_name = "FILE")]
        blueprint: PathBuf,
        /// Validate only; write nothing.
        #[arg(long)]
        check: bool,
        /// Iteration number used for the package name.
        #[arg(long, default_value_t = 1)]
        iteration: usize,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Run both stages end to end.
    Run {
        spec: PathBuf,
        /// Most refinement iterations.
        #[arg(long, env = "HAVEN_K")]
        k: Option<usize>,
        /// Most compile-fix iterations per compile.
        #[arg(long, env = "HAVEN_MAX_FIX")]
        max_fix: Option<usize>,
        /// Convergence threshold in percentage points.
        #[arg(long, env = "HAVEN_CONVERGENCE_PP")]
        convergence_pp: Option<f64>,
        /// `mock:<profile.json>` or `external:<command>`.
        #[arg(long, env = "HAVEN_SIM")]
        sim: Option<String>,
        #[arg(long, env = "HAVEN_OUT", value_name = "DIR")]
        out: Option<PathBuf>,
        #[command(flatten)]
        llm: LlmArgs,
    },
    /// Summarize coverage history of a run directory.
    Report { run_dir: PathBuf },
}

/// The API key is read from the variable named by `llm.api_key_env`
/// (default `HAVEN_API_KEY`) and never from a flag.
#[derive(Args, Debug, Clone, Default)]
struct LlmArgs {
    /// `http` or `scripted:<dir>`.
    #[arg(long, env = "HAVEN_LLM")]
    llm: Option<String>,
    #[arg(long, env = "HAVEN_ENDPOINT")]
    endpoint: Option<String>,
    #[arg(long, env = "HAVEN_MODEL")]
    model: Option<String>,
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        CliError {
            code: 1,
            message: message.into(),
        }
    }
}

/// What a command produced: text for people, JSON for scripts.
pub struct Outcome {
    pub text: String,
    pub json: Value,
    pub code: u8,
}

fn main() -> ExitCode {
    // usage errors are input errors; clap's own code 2 is taken
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let json_mode = cli.json;
    let result = dispatch(cli);
    match result {
        Ok(out) => {
            if json_mode {
                println!("{}", serde_json::to_string_pretty(&out.json).expect("json"));
            } else {
                print!("{}", out.text);
            }
            ExitCode::from(out.code)
        }
        Err(e) => {
            if json_mode {
                let v = json!({ "ok": false, "exit_code": e.code, "error": e.message });
                println!("{}", serde_json::to_string_pretty(&v).expect("json"));
            } else {
                eprintln!("error: {}", e.message);
            }
            ExitCode::from(e.code)
        }
    }
}

fn dispatch(cli: Cli) -> Result<Outcome, CliError> {
    let file = match &cli.config {
        Some(p) => config::FileConfig::load(p)?,
        None => config::FileConfig::default(),
    };
    let settings = |o: config::Overrides| config::resolve(file.clone(), o);
    let llm_overrides = |l: &LlmArgs| config::Overrides {
        llm: l.llm.clone(),
        endpoint: l.endpoint.clone(),
        model: l.model.clone(),
        ..Default::default()
    };
    match cli.command {
        Command::Blueprint { path, out, llm } => {
            commands::blueprint(&path, out.as_deref(), &settings(llm_overrides(&llm))?)
        }
        Command::Render { blueprint, out } => commands::render(&blueprint, out.as_deref()),
        Command::Dsl {
            dsl,
            blueprint,
            check,
            iteration,
            out,
        } => commands::dsl(&dsl, &blueprint, check, iteration, out.as_deref(), &settings(Default::default())?),
        Command::Run {
            spec,
            k,
            max_fix,
            convergence_pp,
            sim,
            out,
            llm,
        } => {
            let o = config::Overrides {
                k,
                max_fix,
                convergence_pp,
                out,
                sim,
                ..llm_overrides(&llm)
            };
            commands::run(&spec, &settings(o)?)
        }
        Command::Report { run_dir } => commands::report(&run_dir),
    }
}
