// SPDX-License-Identifier: Apache-2.0

//! A small template language.
//!
//! ```text
//! {{ design }}                      slot (dotted paths allowed: {{ bus.ack }})
//! {% for p in ports %}...{% endfor %}   loop; `loop.index`, `loop.first`, `loop.last`
//! {% if cond %}...{% else %}...{% endif %}   `cond` is a path, optionally `not path`
//! {# comment #}
//! ```
//!
//! A `{% %}` or `{# #}` tag that is alone on its line swallows the whole line,
//! so control flow does not leave blank lines in generated SystemVerilog.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("{template}:{line}: {message}")]
    Syntax {
        template: String,
        line: usize,
        message: String,
    },
    #[error("missing slot {0}")]
    MissingSlot(String),
    #[error("slot {path} cannot be rendered: {message}")]
    Type { path: String, message: String },
    #[error("template {template}: bad header: {message}")]
    Header { template: String, message: String },
    #[error("template {template} uses slot {slot} but does not declare it")]
    UndeclaredSlot { template: String, slot: String },
    #[error("template {template} targets {scope}, blueprint protocol is {protocol}")]
    ProtocolMismatch {
        template: String,
        scope: String,
        protocol: String,
    },
    #[error("blueprint failed the consistency check: {}", .0.join("; "))]
    Inconsistent(Vec<String>),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Path(Vec<String>);

impl Path {
    fn parse(text: &str) -> Option<Path> {
        let parts: Vec<String> = text.split('.').map(|s| s.trim().to_string()).collect();
        let valid = parts
            .iter()
            .all(|p| !p.is_empty() && p.chars().all(|c| c.is_ascii_alphanumeric() || c == '_'));
        valid.then_some(Path(parts))
    }

    fn root(&self) -> &str {
        &self.0[0]
    }

    fn display(&self) -> String {
        self.0.join(".")
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Text(String),
    Slot(Path),
    For {
        var: String,
        list: Path,
        body: Vec<Node>,
    },
    If {
        negate: bool,
        cond: Path,
        then: Vec<Node>,
        otherwise: Vec<Node>,
    },
}

#[derive(Debug)]
enum Token {
    Text(String),
    Slot(String, usize),
    Tag(String, usize),
}

fn syntax(template: &str, line: usize, message: impl Into<String>) -> TemplateError {
    TemplateError::Syntax {
        template: template.to_string(),
        line,
        message: message.into(),
    }
}

fn tokenize(name: &str, src: &str) -> Result<Vec<Token>, TemplateError> {
    let mut tokens = Vec::new();
    let mut text = String::new();
    let mut rest = src;
    let mut line = 1usize;

    while !rest.is_empty() {
        let next = ["{{", "{%", "{#"]
            .iter()
            .filter_map(|open| rest.find(open).map(|i| (i, *open)))
            .min_by_key(|(i, _)| *i);
        let Some((start, open)) = next else {
            text.push_str(rest);
            break;
        };
        text.push_str(&rest[..start]);
        line += rest[..start].matches('\n').count();
        let close = match open {
            "{{" => "}}",
            "{%" => "%}",
            _ => "#}",
        };
        let after_open = &rest[start + 2..];
        let Some(end) = after_open.find(close) else {
            return Err(syntax(name, line, format!("unterminated {open}")));
        };
        let inner = &after_open[..end];
        let tag_line = line;
        line += inner.matches('\n').count();
        rest = &after_open[end + 2..];

        if open == "{{" {
            tokens.push(Token::Text(std::mem::take(&mut text)));
            tokens.push(Token::Slot(inner.trim().to_string(), tag_line));
            continue;
        }

        // standalone block tags eat their own line
        let line_start = text.rfind('\n').map(|i| i + 1).unwrap_or(0);
        let lead_blank = text[line_start..].chars().all(|c| c == ' ' || c == '\t');
        let trail_end = rest.find('\n');
        let trail = match trail_end {
            Some(i) => &rest[..i],
            None => rest,
        };
        let trail_blank = trail.chars().all(|c| c == ' ' || c == '\t' || c == '\r');
        if lead_blank && trail_blank {
            text.truncate(line_start);
            match trail_end {
                Some(i) => {
                    rest = &rest[i + 1..];
                    line += 1;
                }
                None => rest = "",
            }
        }
        tokens.push(Token::Text(std::mem::take(&mut text)));
        if open == "{%" {
            tokens.push(Token::Tag(inner.trim().to_string(), tag_line));
        }
    }
    tokens.push(Token::Text(text));
    Ok(tokens)
}

struct Parser<'a> {
    name: &'a str,
    tokens: std::vec::IntoIter<Token>,
}

enum Terminator {
    Eof,
    EndFor,
    Else,
    EndIf,
}

impl Parser<'_> {
    fn block(&mut self) -> Result<(Vec<Node>, Terminator, usize), TemplateError> {
        let mut nodes = Vec::new();
        while let Some(tok) = self.tokens.next() {
            match tok {
                Token::Text(t) => {
                    if !t.is_empty() {
                        nodes.push(Node::Text(t));
                    }
                }
                Token::Slot(expr, line) => {
                    let path = Path::parse(&expr)
                        .ok_or_else(|| syntax(self.name, line, format!("bad slot {{{{ {expr} }}}}")))?;
                    nodes.push(Node::Slot(path));
                }
                Token::Tag(tag, line) => {
                    let words: Vec<&str> = tag.split_whitespace().collect();
                    match words.as_slice() {
                        ["for", var, "in", list] => {
                            let list = Path::parse(list)
                                .ok_or_else(|| syntax(self.name, line, "bad loop list"))?;
                            if Path::parse(var).is_none_or(|p| p.0.len() != 1) {
                                return Err(syntax(self.name, line, "bad loop variable"));
                            }
                            let (body, term, _) = self.block()?;
                            if !matches!(term, Terminator::EndFor) {
                                return Err(syntax(self.name, line, "for without endfor"));
                            }
                            nodes.push(Node::For {
                                var: var.to_string(),
                                list,
                                body,
                            });
                        }
                        ["if", rest @ ..] => {
                            let (negate, cond) = match rest {
                                ["not", p] => (true, *p),
                                [p] => (false, *p),
                                _ => return Err(syntax(self.name, line, "bad if condition")),
                            };
                            let cond = Path::parse(cond)
                                .ok_or_else(|| syntax(self.name, line, "bad if condition"))?;
                            let (then, term, _) = self.block()?;
                            let otherwise = match term {
                                Terminator::EndIf => Vec::new(),
                                Terminator::Else => {
                                    let (o, t2, _) = self.block()?;
                                    if !matches!(t2, Terminator::EndIf) {
                                        return Err(syntax(self.name, line, "else without endif"));
                                    }
                                    o
                                }
                                _ => return Err(syntax(self.name, line, "if without endif")),
                            };
                            nodes.push(Node::If {
                                negate,
                                cond,
                                then,
                                otherwise,
                            });
                        }
                        ["endfor"] => return Ok((nodes, Terminator::EndFor, line)),
                        ["else"] => return Ok((nodes, Terminator::Else, line)),
                        ["endif"] => return Ok((nodes, Terminator::EndIf, line)),
                        _ => return Err(syntax(self.name, line, format!("unknown tag {{% {tag} %}}"))),
                    }
                }
            }
        }
        Ok((nodes, Terminator::Eof, 0))
    }
}

/// A compiled template body.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledBody {
    nodes: Vec<Node>,
}

impl CompiledBody {
    pub fn compile(name: &str, src: &str) -> Result<CompiledBody, TemplateError> {
        let tokens = tokenize(name, src)?;
        let mut parser = Parser {
            name,
            tokens: tokens.into_iter(),
        };
        let (nodes, term, line) = parser.block()?;
        match term {
            Terminator::Eof => Ok(CompiledBody { nodes }),
            Terminator::EndFor => Err(syntax(name, line, "endfor without for")),
            Terminator::Else => Err(syntax(name, line, "else without if")),
            Terminator::EndIf => Err(syntax(name, line, "endif without if")),
        }
    }

    /// Root names of every path the body reads from the context (loop
    /// variables excluded).
    pub fn referenced_slots(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        collect(&self.nodes, &mut Vec::new(), &mut out);
        out
    }

    pub fn render(&self, context: &Value) -> Result<String, TemplateError> {
        let mut out = String::new();
        let mut scopes: Vec<(String, Value)> = Vec::new();
        render_nodes(&self.nodes, context, &mut scopes, &mut out)?;
        Ok(out)
    }
}

fn collect(nodes: &[Node], bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
    fn note(p: &Path, bound: &[String], out: &mut BTreeSet<String>) {
        if !bound.iter().any(|b| b == p.root()) {
            out.insert(p.root().to_string());
        }
    }
    for n in nodes {
        match n {
            Node::Text(_) => {}
            Node::Slot(p) => note(p, bound, out),
            Node::For { var, list, body } => {
                note(list, bound, out);
                bound.push(var.clone());
                bound.push("loop".into());
                collect(body, bound, out);
                bound.pop();
                bound.pop();
            }
            Node::If {
                cond,
                then,
                otherwise,
                ..
            } => {
                note(cond, bound, out);
                collect(then, bound, out);
                collect(otherwise, bound, out);
            }
        }
    }
}

fn lookup<'v>(path: &Path, context: &'v Value, scopes: &'v [(String, Value)]) -> Option<&'v Value> {
    let root = scopes
        .iter()
        .rev()
        .find(|(n, _)| n == path.root())
        .map(|(_, v)| v)
        .or_else(|| context.get(path.root()))?;
    path.0[1..].iter().try_fold(root, |v, seg| v.get(seg))
}

fn truthy(v: &Value) -> bool {
    match v {
        Value::Null => false,
        Value::Bool(b) => *b,
        Value::Number(n) => n.as_f64().is_some_and(|x| x != 0.0),
        Value::String(s) => !s.is_empty(),
        Value::Array(a) => !a.is_empty(),
        Value::Object(o) => !o.is_empty(),
    }
}

fn render_nodes(
    nodes: &[Node],
    context: &Value,
    scopes: &mut Vec<(String, Value)>,
    out: &mut String,
) -> Result<(), TemplateError> {
    for n in nodes {
        match n {
            Node::Text(t) => out.push_str(t),
            Node::Slot(p) => {
                let v = lookup(p, context, scopes)
                    .ok_or_else(|| TemplateError::MissingSlot(p.display()))?;
                match v {
                    Value::String(s) => out.push_str(s),
                    Value::Number(n) => out.push_str(&n.to_string()),
                    Value::Bool(b) => out.push_str(if *b { "1" } else { "0" }),
                    other => {
                        return Err(TemplateError::Type {
                            path: p.display(),
                            message: format!("expected a scalar, got {other}"),
                        })
                    }
                }
            }
            Node::For { var, list, body } => {
                let items = match lookup(list, context, scopes) {
                    Some(Value::Array(items)) => items.clone(),
                    Some(Value::Null) => Vec::new(),
                    Some(_) => {
                        return Err(TemplateError::Type {
                            path: list.display(),
                            message: "loop over a non-list".into(),
                        })
                    }
                    None => return Err(TemplateError::MissingSlot(list.display())),
                };
                let count = items.len();
                for (i, item) in items.into_iter().enumerate() {
                    scopes.push((
                        "loop".into(),
                        serde_json::json!({"index": i, "first": i == 0, "last": i + 1 == count}),
                    ));
                    scopes.push((var.clone(), item));
                    let r = render_nodes(body, context, scopes, out);
                    scopes.pop();
                    scopes.pop();
                    r?;
                }
            }
            Node::If {
                negate,
                cond,
                then,
                otherwise,
            } => {
                let v = lookup(cond, context, scopes)
                    .ok_or_else(|| TemplateError::MissingSlot(cond.display()))?;
                if truthy(v) != *negate {
                    render_nodes(then, context, scopes, out)?;
                } else {
                    render_nodes(otherwise, context, scopes, out)?;
                }
            }
        }
    }
    Ok(())
}

/// Splits a leading `{# key: value ... #}` header off a template source.
pub fn parse_header(src: &str) -> Option<(BTreeMap<String, String>, &str)> {
    let trimmed = src.trim_start();
    let body = trimmed.strip_prefix("{#")?;
    let end = body.find("#}")?;
    let mut map = BTreeMap::new();
    let mut last_key: Option<String> = None;
    for raw in body[..end].lines() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        match line.split_once(':') {
            Some((k, v)) if !k.contains(' ') && !raw.starts_with("  ") => {
                map.insert(k.trim().to_string(), v.trim().to_string());
                last_key = Some(k.trim().to_string());
            }
            _ => {
                // continuation line
                if let Some(k) = &last_key {
                    let entry = map.entry(k.clone()).or_default();
                    if !entry.is_empty() {
                        entry.push('\n');
                    }
                    entry.push_str(line);
                }
            }
        }
    }
    let mut rest = &body[end + 2..];
    rest = rest.strip_prefix('\n').unwrap_or(rest);
    Some((map, rest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn render(src: &str, ctx: Value) -> Result<String, TemplateError> {
        CompiledBody::compile("t", src)?.render(&ctx)
    }

    #[test]
    fn slots_and_paths() {
        let out = render("a {{ x }} b {{ y.z }}", json!({"x": "1", "y": {"z": 7}})).unwrap();
        assert_eq!(out, "a 1 b 7");
    }

    #[test]
    fn missing_slot() {
        assert_eq!(
            render("{{ reset_active }}", json!({})),
            Err(TemplateError::MissingSlot("reset_active".into()))
        );
        assert_eq!(
            render("{{ bus.ack }}", json!({"bus": {}})),
            Err(TemplateError::MissingSlot("bus.ack".into()))
        );
    }

    #[test]
    fn loops_trim_standalone_lines() {
        let src = "begin\n  {% for p in ports %}\n  x{{ p }}{% if not loop.last %},{% endif %}\n  {% endfor %}\nend\n";
        let out = render(src, json!({"ports": ["a", "b"]})).unwrap();
        assert_eq!(out, "begin\n  xa,\n  xb\nend\n");
    }

    #[test]
    fn if_else() {
        let src = "{% if on %}\nyes\n{% else %}\nno\n{% endif %}\n";
        assert_eq!(render(src, json!({"on": true})).unwrap(), "yes\n");
        assert_eq!(render(src, json!({"on": false})).unwrap(), "no\n");
        assert_eq!(render(src, json!({"on": ""})).unwrap(), "no\n");
    }

    #[test]
    fn unbalanced_constructs_are_rejected() {
        assert!(CompiledBody::compile("t", "{% for a in b %}x").is_err());
        assert!(CompiledBody::compile("t", "x{% endif %}").is_err());
        assert!(CompiledBody::compile("t", "{% if a %}{% endfor %}").is_err());
        assert!(CompiledBody::compile("t", "{{ a").is_err());
        assert!(CompiledBody::compile("t", "{% frob %}").is_err());
    }

    #[test]
    fn referenced_slots_skip_loop_variables() {
        let body = CompiledBody::compile(
            "t",
            "{{ a }}{% for x in items %}{{ x.name }}{{ loop.index }}{{ b }}{% endfor %}{% if c %}{% endif %}",
        )
        .unwrap();
        let slots: Vec<String> = body.referenced_slots().into_iter().collect();
        assert_eq!(slots, vec!["a", "b", "c", "items"]);
    }

    #[test]
    fn comments_vanish() {
        assert_eq!(render("a\n{# note #}\nb", json!({})).unwrap(), "a\nb");
    }

    #[test]
    fn header_split() {
        let src = "{#\nname: x\nslots: a, b\nactions:\n  go(n)\n  stop()\n#}\nbody {{ a }}\n";
        let (h, body) = parse_header(src).unwrap();
        assert_eq!(h["name"], "x");
        assert_eq!(h["slots"], "a, b");
        assert_eq!(h["actions"], "go(n)\nstop()");
        assert_eq!(body, "body {{ a }}\n");
    }
}
