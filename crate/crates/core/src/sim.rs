// SPDX-License-Identifier: Apache-2.0

//! Simulator backends.
//!
//! [`MockSim`] stands in for a real compile/simulate/report flow. It checks
//! the file set structurally, applies fault-injection rules from a DUT
//! profile, and scores coverage from the accumulated DSL sequences, so the
//! refinement loop can be exercised without EDA tools. [`ExternalSim`] hands
//! the same calls to an outside command.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::coverage::{parse_report, serialize_report, CoverageGap, CoverageSummary, GapKind, Metric};
use crate::seq_dsl::{DslDocument, DslSequence, DslStep, Relation};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceFile {
    pub name: String,
    pub content: String,
}

impl SourceFile {
    pub fn new(name: impl Into<String>, content: impl Into<String>) -> Self {
        SourceFile {
            name: name.into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CompileResult {
    pub success: bool,
    pub error_log: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("simulator unavailable: {0}")]
    Unavailable(String),
    #[error("bad DUT profile: {0}")]
    Profile(String),
    #[error("simulation failed: {0}")]
    Failed(String),
}

pub trait SimulatorBackend {
    fn compile(&mut self, files: &[SourceFile]) -> Result<CompileResult, SimError>;

    /// Runs the compiled testbench with every sequence accumulated so far
    /// and returns a coverage report in the canonical text format.
    fn simulate(&mut self, files: &[SourceFile], sequences: &[DslSequence]) -> Result<String, SimError>;
}

// ---- step patterns ----------------------------------------------------

/// Which steps cover a profile item. Attributes given together must all
/// hold for one step; `count` such steps are needed across all sequences.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepPattern {
    pub any: Option<Vec<StepPattern>>,
    pub all: Option<Vec<StepPattern>>,
    #[serde(rename = "step")]
    pub step_type: Option<String>,
    pub addr: Option<u64>,
    pub field: Option<String>,
    pub value: Option<u64>,
    pub bfm: Option<String>,
    pub action: Option<String>,
    pub pattern: Option<String>,
    pub count: Option<usize>,
}

fn step_addr(s: &DslStep) -> Option<u64> {
    match s {
        DslStep::RegisterWrite { addr, .. } | DslStep::RegisterRead { addr, .. } | DslStep::Poll { addr, .. } => {
            Some(*addr)
        }
        DslStep::MemoryWrite { base_addr, .. } => Some(*base_addr),
        _ => None,
    }
}

fn step_fields(s: &DslStep) -> Vec<&str> {
    match s {
        DslStep::RandomizeSend { constraints } => constraints.iter().map(|c| c.field.as_str()).collect(),
        DslStep::ConfigSweep { fields } => fields.iter().map(|f| f.field.as_str()).collect(),
        DslStep::ValueSweep { field, .. } | DslStep::TogglePattern { field, .. } => vec![field.as_str()],
        _ => vec![],
    }
}

fn step_has_value(s: &DslStep, v: u64) -> bool {
    match s {
        DslStep::RegisterWrite { value, .. } => *value == v,
        DslStep::Poll { expected, .. } => *expected == v,
        DslStep::RandomizeSend { constraints } => constraints.iter().any(|c| match &c.relation {
            Relation::Eq { value } => *value == v,
            Relation::InSet { values } => values.contains(&v),
            Relation::InRange { lo, hi } => (*lo..=*hi).contains(&v),
        }),
        DslStep::MemoryWrite { data, .. } => data.contains(&v),
        DslStep::BfmAction { params, .. } => params.values().any(|p| *p == v),
        DslStep::ConfigSweep { fields } => fields.iter().any(|f| f.values.contains(&v)),
        DslStep::ValueSweep { values, .. } => values.contains(&v),
        DslStep::TogglePattern { .. } | DslStep::RegisterRead { .. } | DslStep::Delay { .. } => false,
    }
}

impl StepPattern {
    fn step_matches(&self, s: &DslStep) -> bool {
        self.step_type.as_deref().is_none_or(|t| t == s.type_name())
            && self.addr.is_none_or(|a| step_addr(s) == Some(a))
            && self.field.as_deref().is_none_or(|f| step_fields(s).contains(&f))
            && self.value.is_none_or(|v| step_has_value(s, v))
            && self.bfm.as_deref().is_none_or(|b| {
                matches!(s, DslStep::BfmAction { bfm, .. } | DslStep::MemoryWrite { bfm, .. } if bfm == b)
            })
            && self
                .action
                .as_deref()
                .is_none_or(|a| matches!(s, DslStep::BfmAction { action, .. } if action == a))
            && self
                .pattern
                .as_deref()
                .is_none_or(|p| matches!(s, DslStep::TogglePattern { pattern, .. } if pattern.as_str() == p))
    }

    pub fn matches(&self, seqs: &[DslSequence]) -> bool {
        if let Some(any) = &self.any {
            return any.iter().any(|p| p.matches(seqs));
        }
        if let Some(all) = &self.all {
            return all.iter().all(|p| p.matches(seqs));
        }
        let hits = seqs
            .iter()
            .flat_map(|s| &s.steps)
            .filter(|s| self.step_matches(s))
            .count();
        hits >= self.count.unwrap_or(1).max(1)
    }
}

// ---- DUT profile ------------------------------------------------------

/// One coverage item the mock scores individually.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileItem {
    /// A gap line, e.g. `GAP FSM ctrl MISSING-STATE ERR`; reported while
    /// uncovered and decides which metric the item counts toward.
    pub gap: String,
    pub when: StepPattern,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompileRule {
    /// Glob over file names.
    pub file: String,
    pub must_contain: Option<String>,
    pub must_not_contain: Option<String>,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompileModel {
    pub always_fail: bool,
    pub rules: Vec<CompileRule>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DutProfile {
    /// `[covered, total]` per metric for everything not listed in `items`.
    pub base: std::collections::BTreeMap<Metric, [u64; 2]>,
    pub items: Vec<ProfileItem>,
    pub compile: CompileModel,
}

fn metric_of(kind: &GapKind) -> Metric {
    match kind {
        GapKind::LineMiss { .. } => Metric::Line,
        GapKind::ConditionMiss { .. } => Metric::Condition,
        GapKind::ToggleMiss { .. } => Metric::Toggle,
        GapKind::BranchMiss { .. } => Metric::Branch,
        GapKind::FsmStateMiss { .. } => Metric::FsmState,
        GapKind::FsmTransitionMiss { .. } => Metric::FsmTransition,
        GapKind::FuncBinMiss { .. } => Metric::Group,
    }
}

impl DutProfile {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let p: DutProfile = serde_json::from_str(text).map_err(|e| SimError::Profile(e.to_string()))?;
        p.gaps()?;
        for r in &p.compile.rules {
            glob::Pattern::new(&r.file).map_err(|e| SimError::Profile(format!("{}: {e}", r.file)))?;
        }
        for (m, [c, t]) in &p.base {
            if c > t {
                return Err(SimError::Profile(format!("base {}: covered > total", m.as_str())));
            }
        }
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Profile(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn gaps(&self) -> Result<Vec<CoverageGap>, SimError> {
        let mut text = String::from(crate::coverage::REPORT_MAGIC);
        text.push('\n');
        for item in &self.items {
            text.push_str(&item.gap);
            text.push('\n');
        }
        let parsed = parse_report(&text).map_err(|e| SimError::Profile(e.to_string()))?;
        if let Some(w) = parsed.warnings.first() {
            return Err(SimError::Profile(format!("item gap {:?}: {}", w.text, w.reason)));
        }
        Ok(parsed.gaps)
    }

    /// Coverage after running `seqs`; a pure function of the sequence set.
    pub fn score(&self, seqs: &[DslSequence]) -> (CoverageSummary, Vec<CoverageGap>) {
        let gaps = self.gaps().expect("profile gaps are checked on load");
        let mut counts: std::collections::BTreeMap<Metric, [u64; 2]> =
            Metric::ALL.into_iter().map(|m| (m, [0, 0])).collect();
        for (m, ct) in &self.base {
            counts.insert(*m, *ct);
        }
        let mut open = Vec::new();
        for (item, gap) in self.items.iter().zip(gaps) {
            let slot = counts.get_mut(&metric_of(&gap.kind)).expect("all metrics present");
            slot[1] += 1;
            if item.when.matches(seqs) {
                slot[0] += 1;
            } else {
                open.push(gap);
            }
        }
        let mut summary = CoverageSummary::default();
        for (m, [c, t]) in counts {
            summary = summary.with(m, c, t);
        }
        (summary, open)
    }
}

// ---- structural compile check -------------------------------------------

const PAIRS: [(&str, &str); 7] = [
    ("begin", "end"),
    ("class", "endclass"),
    ("function", "endfunction"),
    ("task", "endtask"),
    ("module", "endmodule"),
    ("package", "endpackage"),
    ("covergroup", "endgroup"),
];

/// Blanks out comments and string literals, keeping line breaks.
fn strip_comments(src: &str) -> String {
    let mut out = String::with_capacity(src.len());
    let mut chars = src.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '/' if chars.peek() == Some(&'/') => {
                for c in chars.by_ref() {
                    if c == '\n' {
                        out.push('\n');
                        break;
                    }
                }
            }
            '/' if chars.peek() == Some(&'*') => {
                chars.next();
                let mut prev = ' ';
                for c in chars.by_ref() {
                    if c == '\n' {
                        out.push('\n');
                    }
                    if prev == '*' && c == '/' {
                        break;
                    }
                    prev = c;
                }
                out.push(' ');
            }
            '"' => {
                let mut escaped = false;
                for c in chars.by_ref() {
                    if c == '\n' {
                        out.push('\n');
                    }
                    if !escaped && c == '"' {
                        break;
                    }
                    escaped = !escaped && c == '\\';
                }
                out.push_str("\"\"");
            }
            _ => out.push(c),
        }
    }
    out
}

/// Unbalanced block keywords, reported as `(line, message)`.
pub fn structural_errors(src: &str) -> Vec<(usize, String)> {
    let clean = strip_comments(src);
    let mut stacks: Vec<Vec<usize>> = vec![Vec::new(); PAIRS.len()];
    let mut errors = Vec::new();
    for (ln, line) in clean.lines().enumerate() {
        let words: Vec<&str> = line
            .split(|c: char| !(c.is_ascii_alphanumeric() || c == '_' || c == '`' || c == '$'))
            .filter(|w| !w.is_empty())
            .collect();
        for (i, w) in words.iter().enumerate() {
            // `typedef class x;` and `extern function` declare, they do not open
            let declares = i > 0 && matches!(words[i - 1], "typedef" | "extern" | "import");
            for (k, (open, close)) in PAIRS.iter().enumerate() {
                if *w == *open && !declares {
                    stacks[k].push(ln + 1);
                } else if *w == *close && stacks[k].pop().is_none() {
                    errors.push((ln + 1, format!("`{close}` without matching `{open}`")));
                }
            }
        }
    }
    for (k, (open, _)) in PAIRS.iter().enumerate() {
        for ln in &stacks[k] {
            errors.push((*ln, format!("`{open}` is never closed")));
        }
    }
    errors.sort();
    errors
}

fn mock_compile(model: &CompileModel, files: &[SourceFile]) -> CompileResult {
    let mut log = String::new();
    for f in files {
        for (ln, msg) in structural_errors(&f.content) {
            let _ = writeln!(log, "Error-[SE] Syntax error\n  \"{}\", {ln}: {msg}", f.name);
        }
        for r in &model.rules {
            let pat = glob::Pattern::new(&r.file).expect("rules are checked on load");
            if !pat.matches(&f.name) {
                continue;
            }
            let missing = r.must_contain.as_deref().is_some_and(|s| !f.content.contains(s));
            let present = r.must_not_contain.as_deref().is_some_and(|s| f.content.contains(s));
            if missing || present {
                let _ = writeln!(log, "Error-[MOCK] {}\n  \"{}\": {}", r.error, f.name, r.error);
            }
        }
    }
    if model.always_fail {
        let _ = writeln!(log, "Error-[MOCK] compiler configured to fail");
    }
    CompileResult {
        success: log.is_empty(),
        error_log: log,
    }
}

/// Deterministic stand-in for compile and simulation.
#[derive(Debug, Clone, Default)]
pub struct MockSim {
    pub profile: DutProfile,
    pub compiles: usize,
    pub simulations: usize,
}

impl MockSim {
    pub fn new(profile: DutProfile) -> Self {
        MockSim {
            profile,
            ..Default::default()
        }
    }
}

impl SimulatorBackend for MockSim {
    fn compile(&mut self, files: &[SourceFile]) -> Result<CompileResult, SimError> {
        self.compiles += 1;
        Ok(mock_compile(&self.profile.compile, files))
    }

    fn simulate(&mut self, _files: &[SourceFile], sequences: &[DslSequence]) -> Result<String, SimError> {
        self.simulations += 1;
        let (summary, gaps) = self.profile.score(sequences);
        Ok(serialize_report(&summary, &gaps))
    }
}

/// Returns canned reports in order, one per simulation. Compilation uses
/// the same model as [`MockSim`].
#[derive(Debug, Clone, Default)]
pub struct ScheduledSim {
    pub compile: CompileModel,
    reports: VecDeque<String>,
    pub compiles: usize,
    pub simulations: usize,
}

impl ScheduledSim {
    pub fn new(reports: impl IntoIterator<Item = String>) -> Self {
        ScheduledSim {
            reports: reports.into_iter().collect(),
            ..Default::default()
        }
    }
}

impl SimulatorBackend for ScheduledSim {
    fn compile(&mut self, files: &[SourceFile]) -> Result<CompileResult, SimError> {
        self.compiles += 1;
        Ok(mock_compile(&self.compile, files))
    }

    fn simulate(&mut self, _files: &[SourceFile], _sequences: &[DslSequence]) -> Result<String, SimError> {
        self.simulations += 1;
        self.reports
            .pop_front()
            .ok_or_else(|| SimError::Failed("coverage schedule exhausted".into()))
    }
}

/// Delegates to an outside command: `<cmd> compile <dir>` and
/// `<cmd> simulate <dir>`, run through `sh -c`. Sources are written to
/// `<dir>/src`, sequences to `<dir>/sequences.json`; the simulate step must
/// print a canonical coverage report on stdout.
#[derive(Debug, Clone)]
pub struct ExternalSim {
    pub command: String,
    pub work_dir: PathBuf,
}

impl ExternalSim {
    pub fn new(command: impl Into<String>, work_dir: impl Into<PathBuf>) -> Self {
        ExternalSim {
            command: command.into(),
            work_dir: work_dir.into(),
        }
    }

    fn stage(&self, files: &[SourceFile]) -> Result<(), SimError> {
        let src = self.work_dir.join("src");
        std::fs::create_dir_all(&src).map_err(|e| SimError::Unavailable(e.to_string()))?;
        for f in files {
            std::fs::write(src.join(&f.name), &f.content).map_err(|e| SimError::Unavailable(e.to_string()))?;
        }
        Ok(())
    }

    fn run(&self, verb: &str) -> Result<std::process::Output, SimError> {
        Command::new("sh")
            .arg("-c")
            .arg(format!("{} {verb} \"$0\"", self.command))
            .arg(&self.work_dir)
            .output()
            .map_err(|e| SimError::Unavailable(format!("{}: {e}", self.command)))
    }
}

impl SimulatorBackend for ExternalSim {
    fn compile(&mut self, files: &[SourceFile]) -> Result<CompileResult, SimError> {
        self.stage(files)?;
        let out = self.run("compile")?;
        let mut log = String::from_utf8_lossy(&out.stdout).into_owned();
        log.push_str(&String::from_utf8_lossy(&out.stderr));
        Ok(CompileResult {
            success: out.status.success(),
            error_log: log,
        })
    }

    fn simulate(&mut self, files: &[SourceFile], sequences: &[DslSequence]) -> Result<String, SimError> {
        self.stage(files)?;
        let doc = DslDocument {
            sequences: sequences.to_vec(),
        };
        std::fs::write(self.work_dir.join("sequences.json"), doc.to_json())
            .map_err(|e| SimError::Unavailable(e.to_string()))?;
        let out = self.run("simulate")?;
        if !out.status.success() {
            return Err(SimError::Failed(String::from_utf8_lossy(&out.stderr).into_owned()));
        }
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_blocks() {
        assert!(structural_errors("class a; function f(); begin end endfunction endclass").is_empty());
        assert!(structural_errors("typedef class a;\nclass a; endclass").is_empty());
        assert!(structural_errors("// class\n/* begin */ \"end\"").is_empty());
        let e = structural_errors("class a;\n begin\n endclass");
        assert_eq!(e, vec![(2, "`begin` is never closed".to_string())]);
        assert_eq!(structural_errors("end").len(), 1);
    }

    #[test]
    fn rules_name_the_file() {
        let model = CompileModel {
            always_fail: false,
            rules: vec![CompileRule {
                file: "*_seq_item.sv".into(),
                must_contain: Some("rand bit".into()),
                must_not_contain: None,
                error: "missing rand member".into(),
            }],
        };
        let r = mock_compile(&model, &[SourceFile::new("x_seq_item.sv", "class x; endclass")]);
        assert!(!r.success);
        assert!(r.error_log.contains("x_seq_item.sv"));
        let ok = mock_compile(&model, &[SourceFile::new("x_seq_item.sv", "class x; rand bit a; endclass")]);
        assert!(ok.success, "{}", ok.error_log);
    }
}
