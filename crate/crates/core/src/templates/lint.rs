// SPDX-License-Identifier: Apache-2.0

//! Structural lint over generated SystemVerilog.
//!
//! Not a parser: comments and string literals are blanked out, then the text
//! is scanned for the four properties a protocol-correct driver must have.

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use crate::blueprint::Blueprint;

use super::{bfm_spec, ComponentKind, RenderedComponent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// (a) blocking assignment where a non-blocking one is required
    NonBlocking,
    /// (b) DUT signal name not in the Blueprint
    UnknownSignal,
    /// (c) wait or loop without an iteration bound
    UnboundedWait,
    /// (d) unbalanced begin/end style tokens
    Unbalanced,
}

impl Rule {
    pub fn letter(self) -> char {
        match self {
            Rule::NonBlocking => 'a',
            Rule::UnknownSignal => 'b',
            Rule::UnboundedWait => 'c',
            Rule::Unbalanced => 'd',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RuleViolation {
    pub rule: Rule,
    pub line: usize,
    pub message: String,
}

impl fmt::Display for RuleViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: ({}) {}", self.line, self.rule.letter(), self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RuleReport {
    pub violations: Vec<RuleViolation>,
}

impl RuleReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, rule: Rule) -> usize {
        self.violations.iter().filter(|v| v.rule == rule).count()
    }
}

pub fn check_protocol_rules(component: &RenderedComponent, bp: &Blueprint) -> RuleReport {
    check_text(component.kind, &component.content, bp)
}

pub fn check_text(kind: ComponentKind, text: &str, bp: &Blueprint) -> RuleReport {
    let src = Source::new(text);
    let mut violations = Vec::new();
    if matches!(
        kind,
        ComponentKind::Driver | ComponentKind::Bfm | ComponentKind::SequencePkg
    ) {
        assignments(&src, bp, &mut violations);
        signal_names(&src, bp, &mut violations);
        loops(&src, kind, &mut violations);
    }
    balance(&src, &mut violations);
    violations.sort_by_key(|v| (v.line, v.rule));
    RuleReport { violations }
}

struct Source {
    /// Text with comments and string literals replaced by spaces.
    clean: Vec<u8>,
    line_starts: Vec<usize>,
}

fn is_ident(c: u8) -> bool {
    c.is_ascii_alphanumeric() || c == b'_' || c == b'$'
}

impl Source {
    fn new(text: &str) -> Source {
        let bytes = text.as_bytes();
        let mut clean = bytes.to_vec();
        let mut i = 0;
        while i < bytes.len() {
            if bytes[i..].starts_with(b"//") {
                while i < bytes.len() && bytes[i] != b'\n' {
                    clean[i] = b' ';
                    i += 1;
                }
            } else if bytes[i..].starts_with(b"/*") {
                while i < bytes.len() && !bytes[i..].starts_with(b"*/") {
                    if bytes[i] != b'\n' {
                        clean[i] = b' ';
                    }
                    i += 1;
                }
                for _ in 0..2 {
                    if i < bytes.len() {
                        clean[i] = b' ';
                        i += 1;
                    }
                }
            } else if bytes[i] == b'"' {
                clean[i] = b' ';
                i += 1;
                while i < bytes.len() && bytes[i] != b'"' && bytes[i] != b'\n' {
                    if bytes[i] == b'\\' && i + 1 < bytes.len() {
                        clean[i] = b' ';
                        i += 1;
                    }
                    clean[i] = b' ';
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b'"' {
                    clean[i] = b' ';
                    i += 1;
                }
            } else {
                i += 1;
            }
        }
        let mut line_starts = vec![0];
        line_starts.extend(clean.iter().enumerate().filter(|(_, c)| **c == b'\n').map(|(i, _)| i + 1));
        Source { clean, line_starts }
    }

    fn line_of(&self, pos: usize) -> usize {
        self.line_starts.partition_point(|s| *s <= pos)
    }

    fn text(&self, a: usize, b: usize) -> &str {
        std::str::from_utf8(&self.clean[a..b]).unwrap_or("")
    }

    /// Every identifier-like word with its byte offset.
    fn words(&self) -> Vec<(usize, &str)> {
        let mut out = Vec::new();
        let c = &self.clean;
        let mut i = 0;
        while i < c.len() {
            if is_ident(c[i]) && (i == 0 || !is_ident(c[i - 1]) && c[i - 1] != b'`' && c[i - 1] != b'\'') {
                let start = i;
                while i < c.len() && is_ident(c[i]) {
                    i += 1;
                }
                out.push((start, self.text(start, i)));
            } else {
                i += 1;
            }
        }
        out
    }

    fn skip_ws(&self, mut i: usize) -> usize {
        while i < self.clean.len() && self.clean[i].is_ascii_whitespace() {
            i += 1;
        }
        i
    }

    /// Given the offset of an opening parenthesis, the offset just past its match.
    fn matching_paren(&self, open: usize) -> Option<usize> {
        let mut depth = 0usize;
        for (i, &c) in self.clean.iter().enumerate().skip(open) {
            match c {
                b'(' => depth += 1,
                b')' => {
                    depth -= 1;
                    if depth == 0 {
                        return Some(i + 1);
                    }
                }
                _ => {}
            }
        }
        None
    }
}

fn push(v: &mut Vec<RuleViolation>, rule: Rule, line: usize, message: String) {
    v.push(RuleViolation { rule, line, message });
}

/// Byte ranges of `always_ff` and edge-triggered `always` bodies.
fn clocked_ranges(src: &Source, words: &[(usize, &str)]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (wi, &(pos, w)) in words.iter().enumerate() {
        if w != "always" && w != "always_ff" {
            continue;
        }
        let mut i = src.skip_ws(pos + w.len());
        if src.clean.get(i) != Some(&b'@') {
            continue;
        }
        i = src.skip_ws(i + 1);
        if src.clean.get(i) != Some(&b'(') {
            continue;
        }
        let Some(close) = src.matching_paren(i) else { continue };
        let sens = src.text(i, close);
        if w == "always" && !sens.contains("posedge") && !sens.contains("negedge") {
            continue;
        }
        // body: a begin/end block or a single statement
        let rest: Vec<&(usize, &str)> = words[wi + 1..].iter().filter(|(p, _)| *p >= close).collect();
        match rest.first() {
            Some(&&(bpos, "begin")) => {
                let mut depth = 0i32;
                let mut end = src.clean.len();
                for &&(p, t) in &rest {
                    match t {
                        "begin" => depth += 1,
                        "end" => {
                            depth -= 1;
                            if depth == 0 {
                                end = p;
                                break;
                            }
                        }
                        _ => {}
                    }
                }
                out.push((bpos, end));
            }
            _ => {
                let end = src.clean[close..]
                    .iter()
                    .position(|c| *c == b';')
                    .map(|p| close + p)
                    .unwrap_or(src.clean.len());
                out.push((close, end));
            }
        }
    }
    out
}

/// Names declared as module outputs (BFM ports facing the DUT).
fn module_outputs(src: &Source, words: &[(usize, &str)]) -> BTreeSet<String> {
    const TYPES: [&str; 6] = ["logic", "reg", "wire", "bit", "signed", "unsigned"];
    let c = &src.clean;
    let mut out = BTreeSet::new();
    for &(pos, w) in words {
        if w != "output" {
            continue;
        }
        let mut i = pos + w.len();
        loop {
            i = src.skip_ws(i);
            match c.get(i) {
                Some(b'[') => {
                    while i < c.len() && c[i] != b']' {
                        i += 1;
                    }
                    i += 1;
                }
                Some(&ch) if is_ident(ch) => {
                    let start = i;
                    while i < c.len() && is_ident(c[i]) {
                        i += 1;
                    }
                    let word = src.text(start, i);
                    if !TYPES.contains(&word) {
                        out.insert(word.to_string());
                        break;
                    }
                }
                _ => break,
            }
        }
    }
    out
}

const DECL_WORDS: [&str; 14] = [
    "assign", "parameter", "localparam", "wire", "logic", "int", "integer", "bit", "byte", "reg",
    "string", "unsigned", "genvar", "automatic",
];

fn assignments(src: &Source, bp: &Blueprint, v: &mut Vec<RuleViolation>) {
    let words = src.words();
    let clocked = clocked_ranges(src, &words);
    let mut dut_facing: BTreeSet<String> = bp.raw_port_list.iter().map(|p| p.name.clone()).collect();
    dut_facing.extend(module_outputs(src, &words));

    let c = &src.clean;
    for i in 0..c.len() {
        if c[i] != b'=' {
            continue;
        }
        let prev = if i > 0 { c[i - 1] } else { b' ' };
        let next = c.get(i + 1).copied().unwrap_or(b' ');
        if b"=!<>+-*/%&|^~:".contains(&prev) || next == b'=' || next == b'>' {
            continue;
        }
        // left-hand side: optional index, then a dotted path
        let mut j = i;
        while j > 0 && c[j - 1].is_ascii_whitespace() {
            j -= 1;
        }
        while j > 0 && c[j - 1] == b']' {
            let mut depth = 0;
            while j > 0 {
                j -= 1;
                match c[j] {
                    b']' => depth += 1,
                    b'[' => {
                        depth -= 1;
                        if depth == 0 {
                            break;
                        }
                    }
                    _ => {}
                }
            }
        }
        let end = j;
        while j > 0 && (is_ident(c[j - 1]) || c[j - 1] == b'.') {
            j -= 1;
        }
        if j == end {
            continue;
        }
        let lhs = src.text(j, end);
        // statement prefix on the same statement (back to ; or block keyword)
        let stmt_start = c[..j]
            .iter()
            .rposition(|b| matches!(b, b';' | b'(' | b'{' | b'}'))
            .map(|p| p + 1)
            .unwrap_or(0);
        let prefix = src.text(stmt_start, j);
        let declared = prefix
            .split(|ch: char| !ch.is_ascii_alphanumeric() && ch != '_')
            .any(|w| DECL_WORDS.contains(&w));
        if declared {
            continue;
        }
        let line = src.line_of(i);
        let facing = lhs.starts_with("vif.") || dut_facing.contains(lhs);
        if facing {
            push(
                v,
                Rule::NonBlocking,
                line,
                format!("blocking assignment to DUT-facing signal {lhs}"),
            );
        } else if clocked.iter().any(|(a, b)| *a <= i && i < *b) {
            push(
                v,
                Rule::NonBlocking,
                line,
                format!("blocking assignment to {lhs} inside a clocked block"),
            );
        }
    }
}

fn signal_names(src: &Source, bp: &Blueprint, v: &mut Vec<RuleViolation>) {
    let c = &src.clean;
    let words = src.words();
    for (idx, &(pos, w)) in words.iter().enumerate() {
        let dotted = |k: usize| -> Option<&str> {
            let (p, t) = words.get(idx + k)?;
            (c.get(p - 1) == Some(&b'.')).then_some(*t)
        };
        if w == "vif" && c.get(pos + 3) == Some(&b'.') && (pos == 0 || c[pos - 1] != b'.') {
            if let Some(name) = dotted(1) {
                if bp.port(name).is_none() {
                    push(
                        v,
                        Rule::UnknownSignal,
                        src.line_of(pos),
                        format!("vif.{name} is not a port of {}", bp.design_name),
                    );
                }
            }
        }
        if w == "$root" && dotted(1) == Some("tb_top") {
            let (Some(inst), Some(task)) = (dotted(2), dotted(3)) else { continue };
            match bp.bfm(inst) {
                None => push(
                    v,
                    Rule::UnknownSignal,
                    src.line_of(pos),
                    format!("no BFM instance named {inst}"),
                ),
                Some(decl) if bfm_spec(decl.kind).action(task).is_none() => push(
                    v,
                    Rule::UnknownSignal,
                    src.line_of(pos),
                    format!("BFM {inst} has no action {task}"),
                ),
                Some(_) => {}
            }
        }
    }
}

fn has_bound(cond: &str) -> bool {
    let b = cond.as_bytes();
    b.iter().enumerate().any(|(i, &ch)| {
        (ch == b'<' && b.get(i + 1) != Some(&b'<') && (i == 0 || b[i - 1] != b'<'))
            || (ch == b'>' && b.get(i + 1) != Some(&b'>') && (i == 0 || b[i - 1] != b'>'))
    })
}

fn loops(src: &Source, kind: ComponentKind, v: &mut Vec<RuleViolation>) {
    let words = src.words();
    for (idx, &(pos, w)) in words.iter().enumerate() {
        let line = src.line_of(pos);
        let after = src.skip_ws(pos + w.len());
        match w {
            "while" => {
                if src.clean.get(after) != Some(&b'(') {
                    continue;
                }
                let Some(close) = src.matching_paren(after) else { continue };
                let cond = src.text(after + 1, close - 1);
                if !cond.contains('<') {
                    push(
                        v,
                        Rule::UnboundedWait,
                        line,
                        format!("while ({}) has no iteration bound", cond.trim()),
                    );
                }
            }
            "for" => {
                if src.clean.get(after) != Some(&b'(') {
                    continue;
                }
                let Some(close) = src.matching_paren(after) else { continue };
                let header = src.text(after + 1, close - 1);
                let cond = header.split(';').nth(1).unwrap_or("");
                if !has_bound(cond) {
                    push(v, Rule::UnboundedWait, line, "for loop without a bound".into());
                }
            }
            "wait" => {
                let next = words.get(idx + 1).map(|(_, t)| *t);
                if next != Some("fork") {
                    push(v, Rule::UnboundedWait, line, "wait statement has no timeout".into());
                }
            }
            "forever" if kind == ComponentKind::SequencePkg => {
                push(v, Rule::UnboundedWait, line, "forever loop in a sequence".into());
            }
            _ => {}
        }
    }
}

fn balance(src: &Source, v: &mut Vec<RuleViolation>) {
    const PAIRS: [(&str, &[&str]); 12] = [
        ("begin", &["end"]),
        ("fork", &["join", "join_any", "join_none"]),
        ("class", &["endclass"]),
        ("task", &["endtask"]),
        ("function", &["endfunction"]),
        ("module", &["endmodule"]),
        ("interface", &["endinterface"]),
        ("covergroup", &["endgroup"]),
        ("case", &["endcase"]),
        ("package", &["endpackage"]),
        ("generate", &["endgenerate"]),
        ("program", &["endprogram"]),
    ];
    let words = src.words();
    let mut stack: Vec<(&str, usize)> = Vec::new();
    for (idx, &(pos, w)) in words.iter().enumerate() {
        let prev = if idx > 0 { words[idx - 1].1 } else { "" };
        let opener = match w {
            "casez" | "casex" => Some("case"),
            "fork" if matches!(prev, "disable" | "wait") => None,
            "class" if prev == "typedef" => None,
            "interface" if prev == "virtual" => None,
            "function" | "task" if matches!(prev, "extern" | "pure") => None,
            "function" | "task" if prev == "virtual" && idx > 1 && words[idx - 2].1 == "pure" => None,
            _ => PAIRS.iter().find(|(o, _)| *o == w).map(|(o, _)| *o),
        };
        if let Some(o) = opener {
            stack.push((o, pos));
            continue;
        }
        let Some((open, _)) = PAIRS.iter().find(|(_, closers)| closers.contains(&w)) else {
            continue;
        };
        match stack.last() {
            Some((top, _)) if top == open => {
                stack.pop();
            }
            Some((top, p)) => {
                push(
                    v,
                    Rule::Unbalanced,
                    src.line_of(pos),
                    format!("{w} closes {top} opened on line {}", src.line_of(*p)),
                );
                stack.pop();
            }
            None => push(v, Rule::Unbalanced, src.line_of(pos), format!("{w} without {open}")),
        }
    }
    for (open, pos) in stack {
        push(v, Rule::Unbalanced, src.line_of(pos), format!("{open} never closed"));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_strings_are_ignored() {
        let s = Source::new("a // begin\n\"end\" /* fork\n */ b");
        let words: Vec<&str> = s.words().into_iter().map(|(_, w)| w).collect();
        assert_eq!(words, vec!["a", "b"]);
        assert_eq!(s.line_of(s.clean.len() - 1), 3);
    }

    #[test]
    fn bound_detection() {
        assert!(has_bound("i < 8"));
        assert!(has_bound("n > 0"));
        assert!(!has_bound("x << 2"));
        assert!(!has_bound("1"));
    }
}
