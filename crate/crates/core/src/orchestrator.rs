// SPDX-License-Identifier: Apache-2.0

//! Two-stage pipeline driver.
//!
//! Stage 1 turns a specification into a compiling testbench with predefined
//! sequences and an initial coverage report. Stage 2 feeds coverage gaps
//! back to the LLM as DSL requests until coverage stops moving, no gaps
//! remain, or the iteration budget runs out.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::blueprint::{consistency_check, parse_blueprint, Blueprint};
use crate::coverage::{converged_with, parse_report, render_gap_prompt, CoverageError, CoverageSummary};
use crate::llm::{strip_fences, EditableFile, LlmClient, LlmError, TokenLedger};
use crate::predefined::{infer_predefined_with, PredefinedConfig, TriggerReport};
use crate::seq_dsl::{codegen_package, package_file_name, screen, CodegenError, DslConfig, DslDocument, DslSequence};
use crate::sim::{SimError, SimulatorBackend, SourceFile};
use crate::strategy::{infer_all, StrategyMap};
use crate::templates::{render_all, ComponentKind, RenderedComponent, TemplateError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Most Stage-2 iterations. Compile failures do not count.
    pub k: usize,
    pub max_fix_iterations: usize,
    /// Convergence threshold in percentage points.
    pub convergence_pp: f64,
    pub out_dir: Option<PathBuf>,
    /// Text handed to the DSL prompt; taken from the spec when unset.
    pub protocol_flows: Option<String>,
    pub dsl: DslConfig,
    pub predefined: PredefinedConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            k: 3,
            max_fix_iterations: 5,
            convergence_pp: crate::coverage::DEFAULT_CONVERGENCE_PP,
            out_dir: None,
            protocol_flows: None,
            dsl: DslConfig::default(),
            predefined: PredefinedConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_fix_iterations < 1 {
            return Err("max_fix_iterations must be at least 1".into());
        }
        if !(self.convergence_pp.is_finite() && self.convergence_pp > 0.0) {
            return Err("convergence_pp must be a positive number".into());
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum OrchestratorError {
    #[error("specification text is empty")]
    EmptySpec,
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("Blueprint rejected after retry: {}", .0.join("; "))]
    BlueprintRejected(Vec<String>),
    #[error("compile still failing after {iterations} fix iterations:\n{log}")]
    CompileFixExhausted { iterations: usize, log: String },
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error(transparent)]
    Llm(LlmError),
    #[error(transparent)]
    Sim(SimError),
    #[error("rendering failed: {0}")]
    Render(#[from] TemplateError),
    #[error("sequence codegen failed: {0}")]
    Codegen(#[from] CodegenError),
    #[error("coverage report: {0}")]
    Coverage(#[from] CoverageError),
    #[error("writing {path}: {message}")]
    Io { path: String, message: String },
}

impl From<LlmError> for OrchestratorError {
    fn from(e: LlmError) -> Self {
        match e {
            LlmError::Unavailable(_) | LlmError::MissingApiKey(_) => OrchestratorError::BackendUnavailable(e.to_string()),
            other => OrchestratorError::Llm(other),
        }
    }
}

impl From<SimError> for OrchestratorError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Unavailable(m) => OrchestratorError::BackendUnavailable(m),
            other => OrchestratorError::Sim(other),
        }
    }
}

/// One line of `run_log.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunEvent {
    /// Milliseconds since the Unix epoch.
    pub ts: u64,
    pub stage: u8,
    pub event: String,
    #[serde(flatten)]
    pub detail: Map<String, Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    NoGaps,
    Converged,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StepOutcome {
    /// A report was produced and the loop may go on.
    Continue,
    /// The response yielded no usable sequence; the iteration is spent.
    Rejected,
    Stop(StopReason),
}

#[derive(Debug, Clone)]
pub struct PipelineState {
    pub blueprint: Blueprint,
    pub strategies: StrategyMap,
    /// Rendered testbench plus one sequence package per iteration.
    pub components: Vec<RenderedComponent>,
    /// Every accepted sequence, in acceptance order. Append-only.
    pub sequences: Vec<DslSequence>,
    pub triggers: TriggerReport,
    /// Raw report text per simulation.
    pub reports: Vec<String>,
    pub history: Vec<CoverageSummary>,
    /// Completed Stage-2 iterations.
    pub iteration: usize,
    pub ledger: TokenLedger,
    /// Fix iterations spent over the whole run.
    pub fix_iterations: usize,
    pub protocol_flows: String,
    pub stop_reason: Option<StopReason>,
    pub log: Vec<RunEvent>,
}

impl PipelineState {
    pub fn source_files(&self) -> Vec<SourceFile> {
        self.components
            .iter()
            .map(|c| SourceFile::new(c.file_name.clone(), c.content.clone()))
            .collect()
    }

    pub fn component(&self, file_name: &str) -> Option<&RenderedComponent> {
        self.components.iter().find(|c| c.file_name == file_name)
    }

    pub fn run_log_jsonl(&self) -> String {
        self.log
            .iter()
            .map(|e| serde_json::to_string(e).expect("event serializes") + "\n")
            .collect()
    }
}

/// Sections of a Markdown spec whose heading mentions "flow", verbatim.
pub fn protocol_flows_from_spec(spec: &str) -> String {
    let mut out = String::new();
    let mut depth: Option<usize> = None;
    for line in spec.lines() {
        let hashes = line.chars().take_while(|c| *c == '#').count();
        let heading = hashes > 0 && line[hashes..].starts_with(' ');
        if heading {
            if depth.is_some_and(|d| hashes <= d) {
                depth = None;
            }
            if depth.is_none() && line.to_ascii_lowercase().contains("flow") {
                depth = Some(hashes);
            }
        }
        if depth.is_some() {
            out.push_str(line);
            out.push('\n');
        }
    }
    out.trim_end().to_string()
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    llm: &'a mut dyn LlmClient,
    sim: &'a mut dyn SimulatorBackend,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn write_file(dir: &Path, name: &str, content: &str) -> Result<(), OrchestratorError> {
    let path = dir.join(name);
    let io = |e: std::io::Error| OrchestratorError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io)?;
    }
    std::fs::write(&path, content).map_err(io)
}

fn artifact_path(c: &RenderedComponent) -> String {
    match c.kind {
        ComponentKind::SequencePkg => c.file_name.clone(),
        _ => format!("rendered/{}", c.file_name),
    }
}

impl Ctx<'_> {
    fn artifact(&self, name: &str, content: &str) -> Result<(), OrchestratorError> {
        match &self.cfg.out_dir {
            Some(dir) => write_file(dir, name, content),
            None => Ok(()),
        }
    }

    /// Rewrites the run log and token ledger.
    fn persist(&self, state: &mut PipelineState) -> Result<(), OrchestratorError> {
        state.ledger = self.llm.ledger().clone();
        self.artifact("run_log.jsonl", &state.run_log_jsonl())?;
        self.artifact("token_ledger.json", &state.ledger.to_json(None))
    }

    fn persist_components(&self, state: &PipelineState, editable_only: bool) -> Result<(), OrchestratorError> {
        for c in &state.components {
            if !editable_only || !c.protected {
                self.artifact(&artifact_path(c), &c.content)?;
            }
        }
        Ok(())
    }
}

fn log_event(log: &mut Vec<RunEvent>, stage: u8, event: &str, detail: Value) {
    let detail = match detail {
        Value::Object(m) => m,
        _ => Map::new(),
    };
    log.push(RunEvent {
        ts: now_ms(),
        stage,
        event: event.to_string(),
        detail,
    });
}

/// Asks for a Blueprint, re-prompting once with the errors when it fails
/// to parse or is inconsistent. Events go to `log`.
pub fn extract_blueprint(
    llm: &mut dyn LlmClient,
    spec: &str,
    log: &mut Vec<RunEvent>,
) -> Result<Blueprint, OrchestratorError> {
    let mut errors: Vec<String> = Vec::new();
    for attempt in 1..=2 {
        let reply = llm.extract_blueprint(spec, &errors)?;
        let text = strip_fences(&reply);
        errors = match parse_blueprint(text) {
            Ok(bp) => {
                let report = consistency_check(&bp);
                if report.passed() {
                    log_event(log, 1, "blueprint_accepted", json!({ "attempt": attempt, "design": bp.design_name }));
                    return Ok(bp);
                }
                report.issues.iter().map(|i| i.to_string()).collect()
            }
            Err(es) => es.iter().map(|e| e.to_string()).collect(),
        };
        log_event(log, 1, "blueprint_rejected", json!({ "attempt": attempt, "errors": errors }));
    }
    Err(OrchestratorError::BlueprintRejected(errors))
}

/// Sort key for applying edits: the seq_item first, then sequence
/// packages in iteration order, then anything else.
fn dependency_rank(c: &RenderedComponent) -> u8 {
    match c.kind {
        ComponentKind::SeqItem => 0,
        ComponentKind::SequencePkg => 1,
        _ => 2,
    }
}

fn compile_fix(ctx: &mut Ctx<'_>, state: &mut PipelineState, stage: u8) -> Result<usize, OrchestratorError> {
    let mut result = ctx.sim.compile(&state.source_files())?;
    log_event(&mut state.log, stage, "compile", json!({ "fix_iteration": 0, "success": result.success }));
    if result.success {
        return Ok(0);
    }
    for it in 1..=ctx.cfg.max_fix_iterations {
        state.fix_iterations += 1;
        let mut editable: Vec<&RenderedComponent> = state.components.iter().filter(|c| !c.protected).collect();
        editable.sort_by_key(|c| dependency_rank(c));
        let files: Vec<EditableFile<'_>> = editable
            .iter()
            .map(|c| EditableFile {
                name: &c.file_name,
                content: &c.content,
            })
            .collect();
        let edits = match ctx.llm.propose_fix(&result.error_log, &files) {
            Ok(e) => e,
            Err(LlmError::BadResponse(m)) => {
                log_event(&mut state.log, stage, "fix_unparseable", json!({ "fix_iteration": it, "error": m }));
                Vec::new()
            }
            Err(e) => return Err(e.into()),
        };
        let mut ordered: Vec<(u8, usize, _)> = edits
            .into_iter()
            .map(|e| match state.components.iter().position(|c| c.file_name == e.file) {
                Some(idx) => (dependency_rank(&state.components[idx]), idx, e),
                None => (u8::MAX, usize::MAX, e),
            })
            .collect();
        ordered.sort_by_key(|(rank, idx, _)| (*rank, *idx));
        for (_, idx, edit) in ordered {
            let reason = match state.components.get(idx) {
                None => Some("unknown_file"),
                Some(c) if c.protected => Some("protected"),
                Some(_) => None,
            };
            match reason {
                Some(r) => log_event(
                    &mut state.log,
                    stage,
                    "edit_rejected",
                    json!({ "fix_iteration": it, "file": edit.file, "reason": r }),
                ),
                None => {
                    state.components[idx].content = edit.content;
                    log_event(&mut state.log, stage, "edit_applied", json!({ "fix_iteration": it, "file": edit.file }));
                }
            }
        }
        ctx.persist_components(state, true)?;
        result = ctx.sim.compile(&state.source_files())?;
        log_event(&mut state.log, stage, "compile", json!({ "fix_iteration": it, "success": result.success }));
        ctx.persist(state)?;
        if result.success {
            return Ok(it);
        }
    }
    Err(OrchestratorError::CompileFixExhausted {
        iterations: ctx.cfg.max_fix_iterations,
        log: result.error_log,
    })
}

fn simulate(ctx: &mut Ctx<'_>, state: &mut PipelineState, stage: u8, iteration: usize) -> Result<(), OrchestratorError> {
    let text = ctx.sim.simulate(&state.source_files(), &state.sequences)?;
    let parsed = parse_report(&text)?;
    let summary = parsed.summary;
    ctx.artifact(&format!("coverage_iter{iteration}.txt"), &text)?;
    log_event(
        &mut state.log,
        stage,
        "simulated",
        json!({
            "iteration": iteration,
            "sequences": state.sequences.len(),
            "gaps": parsed.gaps.len(),
            "code_coverage": summary.code_coverage().ok(),
            "functional_coverage": summary.functional_coverage().ok(),
        }),
    );
    state.reports.push(text);
    state.history.push(summary);
    Ok(())
}

/// Runs compile-fix on the current file set.
pub fn compile_fix_loop(
    state: &mut PipelineState,
    cfg: &RunConfig,
    llm: &mut dyn LlmClient,
    sim: &mut dyn SimulatorBackend,
) -> Result<usize, OrchestratorError> {
    let mut ctx = Ctx { cfg, llm, sim };
    let r = compile_fix(&mut ctx, state, 0);
    ctx.persist(state)?;
    r
}

pub fn run_stage1(
    spec_text: &str,
    cfg: &RunConfig,
    llm: &mut dyn LlmClient,
    sim: &mut dyn SimulatorBackend,
) -> Result<PipelineState, OrchestratorError> {
    if spec_text.trim().is_empty() {
        return Err(OrchestratorError::EmptySpec);
    }
    cfg.validate().map_err(OrchestratorError::Config)?;
    let mut ctx = Ctx { cfg, llm, sim };
    let mut log = Vec::new();

    let bp = match extract_blueprint(ctx.llm, spec_text, &mut log) {
        Ok(bp) => bp,
        Err(e) => {
            if let Some(dir) = &cfg.out_dir {
                let text: String = log.iter().map(|e| serde_json::to_string(e).expect("event") + "\n").collect();
                write_file(dir, "run_log.jsonl", &text)?;
                write_file(dir, "token_ledger.json", &ctx.llm.ledger().to_json(None))?;
            }
            return Err(e);
        }
    };
    ctx.artifact("blueprint.json", &bp.to_json())?;

    let strategies = infer_all(&bp);
    ctx.artifact(
        "strategies.json",
        &serde_json::to_string_pretty(&strategies).expect("strategies serialize"),
    )?;
    log_event(&mut log, 1, "strategies", json!({ "fields": strategies.len() }));

    let components = render_all(&bp, &strategies)?;
    log_event(
        &mut log,
        1,
        "rendered",
        json!({ "files": components.iter().map(|c| c.file_name.as_str()).collect::<Vec<_>>() }),
    );

    let protocol_flows = cfg
        .protocol_flows
        .clone()
        .unwrap_or_else(|| protocol_flows_from_spec(spec_text));
    let mut state = PipelineState {
        blueprint: bp,
        strategies,
        components,
        sequences: Vec::new(),
        triggers: TriggerReport::default(),
        reports: Vec::new(),
        history: Vec::new(),
        iteration: 0,
        ledger: TokenLedger::default(),
        fix_iterations: 0,
        protocol_flows,
        stop_reason: None,
        log,
    };
    ctx.persist_components(&state, false)?;
    ctx.persist(&mut state)?;

    let (seqs, triggers) = infer_predefined_with(&state.blueprint, &state.strategies, &cfg.predefined);
    let pkg = codegen_package(&seqs, &state.blueprint, &state.strategies, 0)?;
    ctx.artifact(
        "predefined_seqs.json",
        &DslDocument {
            sequences: seqs.clone(),
        }
        .to_json(),
    )?;
    let fired: Vec<&str> = triggers.kinds().iter().filter(|(_, k)| k.fired).map(|(n, _)| *n).collect();
    log_event(
        &mut state.log,
        1,
        "predefined",
        json!({ "sequences": seqs.len(), "triggers": fired }),
    );
    state.triggers = triggers;
    state.sequences = seqs;
    let pkg = RenderedComponent::new(ComponentKind::SequencePkg, package_file_name(0), pkg);
    ctx.artifact(&artifact_path(&pkg), &pkg.content)?;
    state.components.push(pkg);
    ctx.persist(&mut state)?;

    let r = compile_fix(&mut ctx, &mut state, 1);
    ctx.persist(&mut state)?;
    r?;
    simulate(&mut ctx, &mut state, 1, 0)?;
    ctx.persist(&mut state)?;
    Ok(state)
}

/// One Stage-2 iteration; `state.iteration` advances unless the loop stops
/// before asking the LLM.
pub fn run_stage2_step(
    state: &mut PipelineState,
    cfg: &RunConfig,
    llm: &mut dyn LlmClient,
    sim: &mut dyn SimulatorBackend,
) -> Result<StepOutcome, OrchestratorError> {
    let mut ctx = Ctx { cfg, llm, sim };
    let r = stage2_step(&mut ctx, state);
    ctx.persist(state)?;
    r
}

fn stage2_step(ctx: &mut Ctx<'_>, state: &mut PipelineState) -> Result<StepOutcome, OrchestratorError> {
    let latest = state
        .reports
        .last()
        .expect("Stage 2 needs at least one coverage report");
    let gaps = parse_report(latest)?.gaps;
    if gaps.is_empty() {
        log_event(&mut state.log, 2, "no_gaps", json!({ "iteration": state.iteration }));
        return Ok(StepOutcome::Stop(StopReason::NoGaps));
    }
    let i = state.iteration + 1;
    state.iteration = i;

    let prompt = render_gap_prompt(&gaps, &state.sequences, &state.blueprint, &state.protocol_flows);
    let reply = ctx.llm.generate_dsl(&prompt)?;
    let existing: BTreeSet<String> = state.sequences.iter().map(|s| s.name.clone()).collect();
    let screened = screen(
        strip_fences(&reply),
        &state.blueprint,
        &ctx.cfg.dsl,
        &existing,
        &format!("iter{i}"),
    );
    let errors: Vec<String> = screened.errors.iter().map(|e| e.to_string()).collect();
    let doc = DslDocument {
        sequences: screened.sequences.clone(),
    };
    ctx.artifact(&format!("dsl_iter{i}.json"), &doc.to_json())?;
    if screened.sequences.is_empty() {
        log_event(
            &mut state.log,
            2,
            "dsl_rejected",
            json!({ "iteration": i, "errors": errors }),
        );
        return Ok(StepOutcome::Rejected);
    }
    log_event(
        &mut state.log,
        2,
        "dsl_accepted",
        json!({
            "iteration": i,
            "sequences": screened.sequences.iter().map(|s| s.name.as_str()).collect::<Vec<_>>(),
            "renamed": screened.renamed,
            "fixes": screened.fix_log.entries.len(),
            "errors": errors,
        }),
    );

    let pkg = codegen_package(&screened.sequences, &state.blueprint, &state.strategies, i)?;
    let pkg = RenderedComponent::new(ComponentKind::SequencePkg, package_file_name(i), pkg);
    ctx.artifact(&artifact_path(&pkg), &pkg.content)?;
    state.components.push(pkg);
    state.sequences.extend(screened.sequences);
    ctx.persist(state)?;

    compile_fix(ctx, state, 2)?;
    simulate(ctx, state, 2, i)?;

    let n = state.history.len();
    if converged_with(&state.history[n - 2], &state.history[n - 1], ctx.cfg.convergence_pp)? {
        log_event(&mut state.log, 2, "converged", json!({ "iteration": i }));
        return Ok(StepOutcome::Stop(StopReason::Converged));
    }
    Ok(StepOutcome::Continue)
}

pub fn run_stage2(
    mut state: PipelineState,
    cfg: &RunConfig,
    llm: &mut dyn LlmClient,
    sim: &mut dyn SimulatorBackend,
) -> Result<PipelineState, OrchestratorError> {
    cfg.validate().map_err(OrchestratorError::Config)?;
    assert!(!state.history.is_empty(), "Stage 2 needs an initial simulation");
    let mut ctx = Ctx { cfg, llm, sim };
    let start = state.iteration;
    let mut stop = StopReason::IterationLimit;
    while state.iteration - start < cfg.k {
        let r = stage2_step(&mut ctx, &mut state);
        ctx.persist(&mut state)?;
        if let StepOutcome::Stop(reason) = r? {
            stop = reason;
            break;
        }
    }
    if stop == StopReason::IterationLimit {
        log_event(&mut state.log, 2, "iteration_limit", json!({ "k": cfg.k }));
    }
    state.stop_reason = Some(stop);
    log_event(
        &mut state.log,
        2,
        "finished",
        json!({ "reason": stop, "iterations": state.iteration, "simulations": state.history.len() }),
    );
    ctx.persist(&mut state)?;
    Ok(state)
}

/// Both stages back to back.
pub fn run(
    spec_text: &str,
    cfg: &RunConfig,
    llm: &mut dyn LlmClient,
    sim: &mut dyn SimulatorBackend,
) -> Result<PipelineState, OrchestratorError> {
    let state = run_stage1(spec_text, cfg, llm, sim)?;
    run_stage2(state, cfg, llm, sim)
}
