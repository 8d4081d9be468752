// SPDX-License-Identifier: Apache-2.0

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use tbforge_core::blueprint::{consistency_check, parse_blueprint, Blueprint};
use tbforge_core::coverage::{parse_report, Metric, ParsedReport};
use tbforge_core::llm::{HttpLlm, LlmClient, ScriptedLlm};
use tbforge_core::orchestrator::{self, OrchestratorError, PipelineState};
use tbforge_core::seq_dsl::{apply_safety_filters, auto_fix_with, codegen_package, package_file_name, validate_with};
use tbforge_core::sim::{DutProfile, ExternalSim, MockSim, SimulatorBackend};
use tbforge_core::strategy::infer_all;
use tbforge_core::templates::{check_protocol_rules, render_all};

use crate::config::{LlmChoice, Settings, SimChoice};
use crate::{CliError, Outcome};

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn write(path: &Path, content: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::input(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, content).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn orch_error(e: OrchestratorError) -> CliError {
    let code = match e {
        OrchestratorError::CompileFixExhausted { .. } => 2,
        OrchestratorError::BlueprintRejected(_) => 3,
        _ => 1,
    };
    CliError {
        code,
        message: e.to_string(),
    }
}

fn load_blueprint(path: &Path) -> Result<Blueprint, CliError> {
    parse_blueprint(&read(path)?).map_err(|errs| {
        let list: Vec<String> = errs.iter().map(|e| e.to_string()).collect();
        CliError::input(format!("{}: invalid Blueprint\n  {}", path.display(), list.join("\n  ")))
    })
}

fn make_llm(s: &Settings) -> Result<Box<dyn LlmClient>, CliError> {
    match &s.llm {
        LlmChoice::Scripted(dir) => Ok(Box::new(
            ScriptedLlm::from_dir(dir).map_err(|e| CliError::input(e.to_string()))?,
        )),
        LlmChoice::Http => Ok(Box::new(
            HttpLlm::from_env(s.http.clone()).map_err(|e| CliError::input(e.to_string()))?,
        )),
    }
}

fn make_sim(s: &Settings) -> Result<Box<dyn SimulatorBackend>, CliError> {
    match &s.sim {
        None => Err(CliError::input("no simulator selected (use --sim or `sim` in the config file)")),
        Some(SimChoice::Mock(p)) => {
            let profile = DutProfile::load(p).map_err(|e| CliError::input(e.to_string()))?;
            Ok(Box::new(MockSim::new(profile)))
        }
        Some(SimChoice::External(cmd)) => {
            let work = match &s.run.out_dir {
                Some(d) => d.join("sim"),
                None => std::env::temp_dir().join(format!("tbforge-sim-{}", std::process::id())),
            };
            Ok(Box::new(ExternalSim::new(cmd.clone(), work)))
        }
    }
}

pub fn blueprint(path: &Path, out: Option<&Path>, s: &Settings) -> Result<Outcome, CliError> {
    let text = read(path)?;
    let from_spec = path.extension().is_none_or(|e| e != "json");
    let bp = if from_spec {
        let mut llm = make_llm(s)?;
        let mut log = Vec::new();
        orchestrator::extract_blueprint(llm.as_mut(), &text, &mut log).map_err(orch_error)?
    } else {
        match parse_blueprint(&text) {
            Ok(bp) => bp,
            Err(errs) => {
                let list: Vec<String> = errs.iter().map(|e| e.to_string()).collect();
                let mut t = format!("{}: invalid Blueprint\n", path.display());
                for e in &list {
                    let _ = writeln!(t, "  {e}");
                }
                return Ok(Outcome {
                    text: t,
                    json: json!({ "ok": false, "errors": list }),
                    code: 1,
                });
            }
        }
    };
    let report = consistency_check(&bp);
    let issues: Vec<String> = report.issues.iter().map(|i| i.to_string()).collect();
    let mut t = format!(
        "{}: {} design, {} ports, {} fields, {} registers, {} BFMs\n",
        bp.design_name,
        bp.protocol,
        bp.raw_port_list.len(),
        bp.seq_item_fields.len(),
        bp.register_map.len(),
        bp.bfms.len()
    );
    if issues.is_empty() {
        t.push_str("consistency: passed\n");
        if let Some(o) = out {
            write(o, &bp.to_json())?;
            let _ = writeln!(t, "wrote {}", o.display());
        }
    } else {
        let _ = writeln!(t, "consistency: {} issue(s)", issues.len());
        for i in &issues {
            let _ = writeln!(t, "  {i}");
        }
    }
    Ok(Outcome {
        text: t,
        json: json!({
            "ok": issues.is_empty(),
            "design": bp.design_name,
            "protocol": bp.protocol.to_string(),
            "issues": issues,
            "blueprint": bp.to_json_value(),
        }),
        code: if issues.is_empty() { 0 } else { 1 },
    })
}

pub fn render(bp_path: &Path, out: Option<&Path>) -> Result<Outcome, CliError> {
    let bp = load_blueprint(bp_path)?;
    let strategies = infer_all(&bp);
    let components = render_all(&bp, &strategies).map_err(|e| CliError::input(e.to_string()))?;
    let mut t = String::new();
    let mut files = Vec::new();
    let mut violations = 0;
    for c in &components {
        let lint = check_protocol_rules(c, &bp);
        violations += lint.violations.len();
        let _ = writeln!(
            t,
            "{:<32} {:<10} {}",
            c.file_name,
            if c.protected { "protected" } else { "editable" },
            if lint.passed() { "ok".to_string() } else { format!("{} violation(s)", lint.violations.len()) }
        );
        for v in &lint.violations {
            let _ = writeln!(t, "    {v}");
        }
        if let Some(dir) = out {
            write(&dir.join(&c.file_name), &c.content)?;
        }
        files.push(json!({
            "file": c.file_name,
            "kind": c.kind,
            "protected": c.protected,
            "violations": lint.violations,
        }));
    }
    if let Some(dir) = out {
        let _ = writeln!(t, "wrote {} files to {}", components.len(), dir.display());
    }
    Ok(Outcome {
        text: t,
        json: json!({ "ok": violations == 0, "files": files }),
        code: if violations == 0 { 0 } else { 1 },
    })
}

pub fn dsl(
    dsl_path: &Path,
    bp_path: &Path,
    check: bool,
    iteration: usize,
    out: Option<&Path>,
    s: &Settings,
) -> Result<Outcome, CliError> {
    let bp = load_blueprint(bp_path)?;
    let raw = read(dsl_path)?;
    let (fixed, fix_log) = auto_fix_with(&raw, &bp, &s.run.dsl);
    let mut t = String::new();
    for e in &fix_log.entries {
        let _ = writeln!(t, "fix  {} {}: {} -> {}", e.rule.as_str(), e.path, e.before, e.after);
    }
    let seqs = match validate_with(&fixed, &bp, &s.run.dsl) {
        Ok(seqs) => seqs,
        Err(errs) => {
            let list: Vec<String> = errs.iter().map(|e| e.to_string()).collect();
            for e in &list {
                let _ = writeln!(t, "error {e}");
            }
            return Ok(Outcome {
                text: t,
                json: json!({ "ok": false, "fixes": fix_log.entries, "errors": list }),
                code: 1,
            });
        }
    };
    let mut filtered = Vec::new();
    let mut filter_logs = Vec::new();
    for seq in &seqs {
        let (f, log) = apply_safety_filters(seq, &bp);
        for ev in &log.events {
            let _ = writeln!(t, "filter {}: {}", seq.name, serde_json::to_string(ev).expect("json"));
        }
        filter_logs.push(log);
        filtered.push(f);
    }
    let _ = writeln!(t, "{} sequence(s) valid", filtered.len());
    let mut json = json!({
        "ok": true,
        "fixes": fix_log.entries,
        "filters": filter_logs,
        "sequences": filtered.iter().map(|s| s.name.as_str()).collect::<Vec<_>>(),
    });
    if !check {
        let pkg = codegen_package(&filtered, &bp, &infer_all(&bp), iteration)
            .map_err(|e| CliError::input(e.to_string()))?;
        let name = package_file_name(iteration);
        match out {
            Some(dir) => {
                let path = dir.join(&name);
                write(&path, &pkg)?;
                let _ = writeln!(t, "wrote {}", path.display());
                json["file"] = json!(path);
            }
            None => {
                t.push_str(&pkg);
                json["package"] = json!(pkg);
            }
        }
    }
    Ok(Outcome { text: t, json, code: 0 })
}

fn pct(v: Result<f64, impl std::fmt::Display>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_else(|_| "-".into())
}

fn history_rows(reports: &[(usize, ParsedReport)]) -> (String, Vec<Value>) {
    let mut t = format!("{:<6} {:>8} {:>12} {:>6}\n", "iter", "code %", "functional %", "gaps");
    let mut rows = Vec::new();
    for (i, r) in reports {
        let code = r.summary.code_coverage();
        let func = r.summary.functional_coverage();
        let _ = writeln!(
            t,
            "{:<6} {:>8} {:>12} {:>6}",
            i,
            pct(code.clone()),
            pct(func.clone()),
            r.gaps.len()
        );
        rows.push(json!({
            "iteration": i,
            "code_coverage": code.ok(),
            "functional_coverage": func.ok(),
            "gaps": r.gaps.len(),
        }));
    }
    (t, rows)
}

pub fn run(spec_path: &Path, s: &Settings) -> Result<Outcome, CliError> {
    let spec = read(spec_path)?;
    let mut llm = make_llm(s)?;
    let mut sim = make_sim(s)?;
    let state: PipelineState =
        orchestrator::run(&spec, &s.run, llm.as_mut(), sim.as_mut()).map_err(orch_error)?;
    let reports: Vec<(usize, ParsedReport)> = state
        .reports
        .iter()
        .enumerate()
        .map(|(i, r)| (i, parse_report(r).expect("reports were parsed during the run")))
        .collect();
    let stop = state.stop_reason.map(|r| serde_json::to_value(r).expect("json"));
    let stop_text = stop.as_ref().and_then(Value::as_str).unwrap_or("-").to_string();
    let (table, rows) = history_rows(&reports);
    let tokens = state.ledger.totals();
    let mut t = format!(
        "{}: {} simulation(s), {} refinement iteration(s), stopped: {stop_text}\n",
        state.blueprint.design_name,
        state.history.len(),
        state.iteration
    );
    let _ = writeln!(
        t,
        "sequences: {}, fix iterations: {}",
        state.sequences.len(),
        state.fix_iterations
    );
    t.push_str(&table);
    let _ = writeln!(
        t,
        "LLM: {} call(s), {} input / {} output tokens",
        tokens.calls, tokens.input_tokens, tokens.output_tokens
    );
    if let Some(dir) = &s.run.out_dir {
        let _ = writeln!(t, "artifacts: {}", dir.display());
    }
    Ok(Outcome {
        text: t,
        json: json!({
            "ok": true,
            "design": state.blueprint.design_name,
            "stop_reason": stop,
            "iterations": state.iteration,
            "fix_iterations": state.fix_iterations,
            "sequences": state.sequences.iter().map(|s| s.name.as_str()).collect::<Vec<_>>(),
            "history": rows,
            "tokens": tokens,
            "out_dir": s.run.out_dir,
        }),
        code: 0,
    })
}

fn coverage_files(dir: &Path) -> Result<Vec<(usize, PathBuf)>, CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::input(format!("{}: {e}", dir.display())))?;
    let mut out: Vec<(usize, PathBuf)> = entries
        .filter_map(Result::ok)
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            let n = name.strip_prefix("coverage_iter")?.strip_suffix(".txt")?.parse().ok()?;
            Some((n, e.path()))
        })
        .collect();
    out.sort();
    Ok(out)
}

pub fn report(dir: &Path) -> Result<Outcome, CliError> {
    let files = coverage_files(dir)?;
    if files.is_empty() {
        return Err(CliError::input(format!("{}: no coverage_iter*.txt files", dir.display())));
    }
    let mut reports = Vec::new();
    for (n, p) in &files {
        let r = parse_report(&read(p)?).map_err(|e| CliError::input(format!("{}: {e}", p.display())))?;
        reports.push((*n, r));
    }
    let design = std::fs::read_to_string(dir.join("blueprint.json"))
        .ok()
        .and_then(|t| parse_blueprint(&t).ok())
        .map(|bp| bp.design_name)
        .unwrap_or_else(|| dir.display().to_string());
    let first = &reports[0].1.summary;
    let last = &reports[reports.len() - 1].1.summary;

    let mut t = format!("{design}\n{:<16} {:>9} {:>9} {:>8}\n", "metric", "Stage 1", "+Stage 2", "delta");
    let mut metrics = Vec::new();
    let mut row = |t: &mut String, name: &str, a: Option<f64>, b: Option<f64>| {
        let delta = a.zip(b).map(|(a, b)| b - a);
        let _ = writeln!(
            t,
            "{name:<16} {:>9} {:>9} {:>8}",
            a.map_or("-".into(), |v| format!("{v:.2}")),
            b.map_or("-".into(), |v| format!("{v:.2}")),
            delta.map_or("-".into(), |v| format!("{v:+.2}")),
        );
        metrics.push(json!({ "metric": name, "stage1": a, "stage2": b, "delta": delta }));
    };
    for m in Metric::ALL {
        row(&mut t, m.as_str(), first.percent(m).ok(), last.percent(m).ok());
    }
    row(&mut t, "code", first.code_coverage().ok(), last.code_coverage().ok());
    row(&mut t, "functional", first.functional_coverage().ok(), last.functional_coverage().ok());
    t.push('\n');
    let (table, rows) = history_rows(&reports);
    t.push_str(&table);
    Ok(Outcome {
        text: t,
        json: json!({ "ok": true, "design": design, "metrics": metrics, "history": rows }),
        code: 0,
    })
}
