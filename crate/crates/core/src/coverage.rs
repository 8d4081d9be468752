// SPDX-License-Identifier: Apache-2.0

//! Coverage reports, gap records and loop convergence.
//!
//! Reports use a small line-oriented format so the refinement loop does not
//! depend on any vendor's report layout:
//!
//! ```text
//! HAVENCOV v1
//! METRIC line 412 480
//! METRIC group 37 45
//! GAP LINE rtl/can_tx.v 118
//! GAP COND rtl/can_tx.v 131 tx_req && !busy
//! GAP TOGGLE tx_o rise_missed
//! GAP BRANCH rtl/can_tx.v 140 else
//! GAP FSM ctrl_fsm MISSING-STATE ERROR
//! GAP FSM ctrl_fsm MISSING-TRANSITION IDLE->TX
//! GAP FUNC can_cov.FP_002 MISSING-BIN status_active # transmission status
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Any gap line may end
//! with ` # note`; the note travels into the gap prompt but is not part of
//! the gap's identity. The `GAP` keyword may be omitted on input.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::blueprint::Blueprint;
use crate::seq_dsl::DslSequence;

pub const REPORT_MAGIC: &str = "HAVENCOV v1";

/// Early-stop threshold in percentage points.
pub const DEFAULT_CONVERGENCE_PP: f64 = 0.1;

/// Deltas this close to the threshold count as reaching it, so that 90.0 to
/// 90.1 is not mistaken for a 0.0999... improvement.
const EPSILON_PP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CoverageError {
    #[error("not a coverage report: first line must be `{REPORT_MAGIC}`")]
    UnsupportedFormat,
    #[error("metric `{0}` missing from the report")]
    MissingMetric(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Line,
    Condition,
    Toggle,
    Branch,
    FsmState,
    FsmTransition,
    Group,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::Line,
        Metric::Condition,
        Metric::Toggle,
        Metric::Branch,
        Metric::FsmState,
        Metric::FsmTransition,
        Metric::Group,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Line => "line",
            Metric::Condition => "condition",
            Metric::Toggle => "toggle",
            Metric::Branch => "branch",
            Metric::FsmState => "fsm_state",
            Metric::FsmTransition => "fsm_transition",
            Metric::Group => "group",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == name)
    }
}

/// Covered and total item counts for one metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub covered: u64,
    pub total: u64,
}

impl Counts {
    pub fn new(covered: u64, total: u64) -> Self {
        Counts { covered, total }
    }

    /// Percentage in [0, 100]. A metric with nothing to cover is complete.
    pub fn percent(self) -> f64 {
        if self.total == 0 {
            100.0
        } else {
            self.covered as f64 * 100.0 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageSummary {
    pub metrics: BTreeMap<Metric, Counts>,
}

impl CoverageSummary {
    pub fn with(mut self, metric: Metric, covered: u64, total: u64) -> Self {
        self.metrics.insert(metric, Counts::new(covered, total));
        self
    }

    /// Builds a summary from percentages, stored as hundredths of a point
    /// over a total of 10000.
    pub fn from_percentages(pairs: &[(Metric, f64)]) -> Self {
        let mut s = CoverageSummary::default();
        for &(m, p) in pairs {
            let covered = (p.clamp(0.0, 100.0) * 100.0).round() as u64;
            s.metrics.insert(m, Counts::new(covered, 10_000));
        }
        s
    }

    pub fn percent(&self, metric: Metric) -> Result<f64, CoverageError> {
        self.metrics
            .get(&metric)
            .map(|c| c.percent())
            .ok_or(CoverageError::MissingMetric(metric.as_str()))
    }

    pub fn code_coverage(&self) -> Result<f64, CoverageError> {
        compute_code_coverage(self)
    }

    pub fn functional_coverage(&self) -> Result<f64, CoverageError> {
        self.percent(Metric::Group)
    }
}

/// Unweighted mean of line, condition, toggle, branch and FSM, where FSM is
/// itself the mean of state and transition coverage. `group` is not read.
pub fn compute_code_coverage(s: &CoverageSummary) -> Result<f64, CoverageError> {
    let fsm = (s.percent(Metric::FsmState)? + s.percent(Metric::FsmTransition)?) / 2.0;
    let parts = [
        s.percent(Metric::Line)?,
        s.percent(Metric::Condition)?,
        s.percent(Metric::Toggle)?,
        s.percent(Metric::Branch)?,
        fsm,
    ];
    Ok(parts.iter().sum::<f64>() / parts.len() as f64)
}

pub fn converged(prev: &CoverageSummary, curr: &CoverageSummary) -> Result<bool, CoverageError> {
    converged_with(prev, curr, DEFAULT_CONVERGENCE_PP)
}

/// True iff both code and functional coverage improved by less than
/// `threshold` percentage points.
pub fn converged_with(prev: &CoverageSummary, curr: &CoverageSummary, threshold: f64) -> Result<bool, CoverageError> {
    let code = curr.code_coverage()? - prev.code_coverage()?;
    let func = curr.functional_coverage()? - prev.functional_coverage()?;
    Ok(code < threshold - EPSILON_PP && func < threshold - EPSILON_PP)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToggleDirection {
    RiseMissed,
    FallMissed,
}

impl ToggleDirection {
    pub fn as_str(self) -> &'static str {
        match self {
            ToggleDirection::RiseMissed => "rise_missed",
            ToggleDirection::FallMissed => "fall_missed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GapKind {
    LineMiss { file: String, line: u32 },
    ConditionMiss { file: String, line: u32, term: String },
    ToggleMiss { signal: String, direction: ToggleDirection },
    BranchMiss { file: String, line: u32, branch: String },
    FsmStateMiss { fsm: String, state: String },
    FsmTransitionMiss { fsm: String, from: String, to: String },
    FuncBinMiss { covergroup: String, coverpoint: String, bin: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CoverageGap {
    #[serde(flatten)]
    pub kind: GapKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

impl From<GapKind> for CoverageGap {
    fn from(kind: GapKind) -> Self {
        CoverageGap { kind, note: None }
    }
}

impl CoverageGap {
    pub fn with_note(mut self, note: &str) -> Self {
        self.note = Some(note.to_string());
        self
    }

    /// Stable key for duplicate detection across iterations.
    pub fn identity(&self) -> String {
        match &self.kind {
            GapKind::LineMiss { file, line } => format!("line:{file}:{line}"),
            GapKind::ConditionMiss { file, line, term } => format!("cond:{file}:{line}:{term}"),
            GapKind::ToggleMiss { signal, direction } => format!("toggle:{signal}:{}", direction.as_str()),
            GapKind::BranchMiss { file, line, branch } => format!("branch:{file}:{line}:{branch}"),
            GapKind::FsmStateMiss { fsm, state } => format!("fsm_state:{fsm}:{state}"),
            GapKind::FsmTransitionMiss { fsm, from, to } => format!("fsm_trans:{fsm}:{from}->{to}"),
            GapKind::FuncBinMiss {
                covergroup,
                coverpoint,
                bin,
            } => format!("func:{covergroup}.{coverpoint}:{bin}"),
        }
    }

    /// One plain-text line for the gap prompt.
    pub fn describe(&self) -> String {
        let text = match &self.kind {
            GapKind::LineMiss { file, line } => format!("line {file}:{line} never executed"),
            GapKind::ConditionMiss { file, line, term } => {
                format!("condition term `{term}` at {file}:{line} never evaluated both ways")
            }
            GapKind::ToggleMiss { signal, direction } => {
                let edge = match direction {
                    ToggleDirection::RiseMissed => "0->1",
                    ToggleDirection::FallMissed => "1->0",
                };
                format!("signal {signal} never toggled {edge}")
            }
            GapKind::BranchMiss { file, line, branch } => format!("branch `{branch}` at {file}:{line} never taken"),
            GapKind::FsmStateMiss { fsm, state } => format!("FSM {fsm} never reached state {state}"),
            GapKind::FsmTransitionMiss { fsm, from, to } => {
                format!("FSM {fsm} never took transition {from} -> {to}")
            }
            GapKind::FuncBinMiss {
                covergroup,
                coverpoint,
                bin,
            } => format!("coverpoint {covergroup}.{coverpoint} bin {bin} never hit"),
        };
        match &self.note {
            Some(n) => format!("{text} ({n})"),
            None => text,
        }
    }

    fn body(&self) -> String {
        match &self.kind {
            GapKind::LineMiss { file, line } => format!("LINE {file} {line}"),
            GapKind::ConditionMiss { file, line, term } => format!("COND {file} {line} {term}"),
            GapKind::ToggleMiss { signal, direction } => format!("TOGGLE {signal} {}", direction.as_str()),
            GapKind::BranchMiss { file, line, branch } => format!("BRANCH {file} {line} {branch}"),
            GapKind::FsmStateMiss { fsm, state } => format!("FSM {fsm} MISSING-STATE {state}"),
            GapKind::FsmTransitionMiss { fsm, from, to } => format!("FSM {fsm} MISSING-TRANSITION {from}->{to}"),
            GapKind::FuncBinMiss {
                covergroup,
                coverpoint,
                bin,
            } => format!("FUNC {covergroup}.{coverpoint} MISSING-BIN {bin}"),
        }
    }
}

impl fmt::Display for CoverageGap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GAP {}", self.body())?;
        if let Some(n) = &self.note {
            write!(f, " # {n}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReportWarning {
    pub line: usize,
    pub text: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ParsedReport {
    pub summary: CoverageSummary,
    pub gaps: Vec<CoverageGap>,
    pub warnings: Vec<ReportWarning>,
}

fn is_word(s: &str) -> bool {
    !s.is_empty() && !s.contains(char::is_whitespace)
}

fn parse_gap(body: &str) -> Result<GapKind, String> {
    let (kind, rest) = body.split_once(' ').unwrap_or((body, ""));
    let rest = rest.trim();
    let words: Vec<&str> = rest.split_whitespace().collect();
    let line_no = |s: &str| s.parse::<u32>().map_err(|_| format!("bad line number `{s}`"));
    let owned = |s: &str| s.to_string();
    match kind {
        "LINE" => match words.as_slice() {
            [file, line] => Ok(GapKind::LineMiss {
                file: owned(file),
                line: line_no(line)?,
            }),
            _ => Err("expected `LINE <file> <line>`".into()),
        },
        "COND" | "BRANCH" => {
            let mut it = rest.splitn(3, ' ');
            let (Some(file), Some(line), Some(tail)) = (it.next(), it.next(), it.next()) else {
                return Err(format!("expected `{kind} <file> <line> <term>`"));
            };
            let tail = tail.trim();
            if !is_word(file) || tail.is_empty() {
                return Err(format!("expected `{kind} <file> <line> <term>`"));
            }
            let line = line_no(line)?;
            Ok(if kind == "COND" {
                GapKind::ConditionMiss {
                    file: owned(file),
                    line,
                    term: owned(tail),
                }
            } else {
                GapKind::BranchMiss {
                    file: owned(file),
                    line,
                    branch: owned(tail),
                }
            })
        }
        "TOGGLE" => match words.as_slice() {
            [signal, "rise_missed"] => Ok(GapKind::ToggleMiss {
                signal: owned(signal),
                direction: ToggleDirection::RiseMissed,
            }),
            [signal, "fall_missed"] => Ok(GapKind::ToggleMiss {
                signal: owned(signal),
                direction: ToggleDirection::FallMissed,
            }),
            _ => Err("expected `TOGGLE <signal> rise_missed|fall_missed`".into()),
        },
        "FSM" => match words.as_slice() {
            [fsm, "MISSING-STATE", state] => Ok(GapKind::FsmStateMiss {
                fsm: owned(fsm),
                state: owned(state),
            }),
            [fsm, "MISSING-TRANSITION", arc] => match arc.split_once("->") {
                Some((from, to)) if !from.is_empty() && !to.is_empty() => Ok(GapKind::FsmTransitionMiss {
                    fsm: owned(fsm),
                    from: owned(from),
                    to: owned(to),
                }),
                _ => Err(format!("bad transition `{arc}`")),
            },
            _ => Err("expected `FSM <fsm> MISSING-STATE <s>` or `MISSING-TRANSITION <a>-><b>`".into()),
        },
        "FUNC" => match words.as_slice() {
            [point, "MISSING-BIN", bin] => match point.rsplit_once('.') {
                Some((cg, cp)) if !cg.is_empty() && !cp.is_empty() => Ok(GapKind::FuncBinMiss {
                    covergroup: owned(cg),
                    coverpoint: owned(cp),
                    bin: owned(bin),
                }),
                _ => Err(format!("expected `<covergroup>.<coverpoint>`, got `{point}`")),
            },
            _ => Err("expected `FUNC <covergroup>.<coverpoint> MISSING-BIN <bin>`".into()),
        },
        other => Err(format!("unknown gap type `{other}`")),
    }
}

pub fn parse_report(text: &str) -> Result<ParsedReport, CoverageError> {
    let mut lines = text.lines().enumerate();
    let header = lines.by_ref().find(|(_, l)| !l.trim().is_empty());
    match header {
        Some((_, l)) if l.trim_end() == REPORT_MAGIC => {}
        _ => return Err(CoverageError::UnsupportedFormat),
    }
    let mut out = ParsedReport::default();
    for (i, raw) in lines {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let warn = |reason: String| ReportWarning {
            line: i + 1,
            text: raw.to_string(),
            reason,
        };
        if let Some(rest) = line.strip_prefix("METRIC ") {
            match rest.split_whitespace().collect::<Vec<_>>().as_slice() {
                [name, covered, total] => {
                    let Some(m) = Metric::from_name(name) else {
                        out.warnings.push(warn(format!("unknown metric `{name}`")));
                        continue;
                    };
                    match (covered.parse::<u64>(), total.parse::<u64>()) {
                        (Ok(c), Ok(t)) if c <= t => {
                            if out.summary.metrics.insert(m, Counts::new(c, t)).is_some() {
                                out.warnings.push(warn(format!("metric `{name}` repeated; last one wins")));
                            }
                        }
                        _ => out.warnings.push(warn("expected `covered <= total` as integers".into())),
                    }
                }
                _ => out.warnings.push(warn("expected `METRIC <name> <covered> <total>`".into())),
            }
            continue;
        }
        let body = line.strip_prefix("GAP ").unwrap_or(line);
        let (body, note) = match body.split_once(" # ") {
            Some((b, n)) => (b.trim_end(), Some(n.trim().to_string()).filter(|n| !n.is_empty())),
            None => (body, None),
        };
        match parse_gap(body) {
            Ok(kind) => out.gaps.push(CoverageGap { kind, note }),
            Err(reason) => out.warnings.push(warn(reason)),
        }
    }
    Ok(out)
}

/// Canonical text: header, metrics in fixed order, gaps in the given order.
pub fn serialize_report(summary: &CoverageSummary, gaps: &[CoverageGap]) -> String {
    let mut out = format!("{REPORT_MAGIC}\n");
    for m in Metric::ALL {
        if let Some(c) = summary.metrics.get(&m) {
            let _ = writeln!(out, "METRIC {} {} {}", m.as_str(), c.covered, c.total);
        }
    }
    for g in gaps {
        let _ = writeln!(out, "{g}");
    }
    out
}

/// Instructions appended to every generation prompt.
pub const DSL_SCHEMA_BLOCK: &str = r#"Reply with one JSON object and nothing else:
{"sequences": [{"name": "<identifier>", "description": "<text>", "steps": [<step>, ...]}]}
Each step is an object with a "type" and exactly these keys:
  register_write  addr, value
  register_read   addr, store_as
  poll            addr, mask, expected, max_iters, interval_cycles
  randomize_send  constraints: [{"field", "op": "eq", "value"} | {"field", "op": "in_set", "values"} | {"field", "op": "in_range", "lo", "hi"}]
  delay           cycles
  memory_write    bfm, base_addr, data
  bfm_action      bfm, action, params
  config_sweep    fields: [{"field", "values"}]
  value_sweep     field, values
  toggle_pattern  field, pattern (walking_one | walking_zero | alternating)
Use only register addresses, field names and BFM actions listed above. Numbers are plain integers.
There is no branching or looping beyond these steps; every poll needs max_iters.
Do not repeat an existing sequence; target the gaps."#;

fn register_lines(bp: &Blueprint, out: &mut String) {
    if bp.register_map.is_empty() {
        out.push_str("(no registers)\n");
        return;
    }
    for r in &bp.register_map {
        let _ = write!(
            out,
            "- {} @ {} ({}, {} bits)",
            r.name,
            crate::num::hex(r.address),
            r.access.as_str(),
            r.width
        );
        if !r.fields.is_empty() {
            let fields: Vec<String> = r
                .fields
                .iter()
                .map(|f| {
                    if f.msb == f.lsb {
                        format!("{}[{}]", f.name, f.lsb)
                    } else {
                        format!("{}[{}:{}]", f.name, f.msb, f.lsb)
                    }
                })
                .collect();
            let _ = write!(out, " fields: {}", fields.join(", "));
        }
        out.push('\n');
    }
}

fn field_lines(bp: &Blueprint, out: &mut String) {
    for f in &bp.seq_item_fields {
        let _ = writeln!(
            out,
            "- {} ({} bits, {}, {})",
            f.name,
            f.width,
            match f.direction {
                crate::blueprint::FieldDirection::ToDut => "to_dut",
                crate::blueprint::FieldDirection::FromDut => "from_dut",
            },
            f.role.as_str()
        );
    }
}

fn bfm_lines(bp: &Blueprint, out: &mut String) {
    for b in &bp.bfms {
        let spec = crate::templates::bfm_spec(b.kind);
        let actions: Vec<String> = spec
            .actions
            .iter()
            .map(|a| format!("{}({})", a.name, a.params.join(", ")))
            .collect();
        let _ = writeln!(out, "- {} ({}): {}", b.instance_name, b.kind.as_str(), actions.join(", "));
    }
}

/// Prompt for the sequence generator. Deterministic in its inputs.
pub fn render_gap_prompt(
    gaps: &[CoverageGap],
    existing: &[DslSequence],
    bp: &Blueprint,
    protocol_flows: &str,
) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Write stimulus sequences for the `{}` testbench ({} protocol) that close the coverage gaps below.\n",
        bp.design_name,
        bp.protocol.scope_name()
    );
    let _ = writeln!(out, "## Uncovered items ({})", gaps.len());
    for g in gaps {
        let _ = writeln!(out, "- {}", g.describe());
    }
    let _ = writeln!(out, "\n## Existing sequences ({})", existing.len());
    for s in existing {
        let _ = writeln!(out, "- {}", s.summary());
    }
    out.push_str("\n## Register map\n");
    register_lines(bp, &mut out);
    out.push_str("\n## Transaction fields\n");
    field_lines(bp, &mut out);
    if !bp.bfms.is_empty() {
        out.push_str("\n## BFM instances\n");
        bfm_lines(bp, &mut out);
    }
    out.push_str("\n## Protocol flows\n");
    let flows = protocol_flows.trim();
    out.push_str(if flows.is_empty() { "(none given)" } else { flows });
    out.push_str("\n\n## Output format\n");
    out.push_str(DSL_SCHEMA_BLOCK);
    out.push('\n');
    out
}
