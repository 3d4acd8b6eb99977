//! DOT export of process models and a reader for exactly that subset.

use std::fmt::Write as _;

use crate::discovery::{Edge, ProcessModel};
use crate::error::{Error, Result};
use crate::eventlog::ColumnMapping;

pub fn export_dot(model: &ProcessModel) -> String {
    let mut out = String::from("digraph process_model {\n");
    let _ = write!(out, "  graph [threshold=\"{}\"", model.threshold);
    if let Some(m) = &model.mapping {
        let _ = write!(out, ", mapping=\"{m}\"");
    }
    out.push_str("];\n");
    for activity in &model.alphabet {
        let _ = writeln!(out, "  {};", quote(activity));
    }
    for edge in &model.edges {
        let _ = writeln!(
            out,
            "  {} -> {} [label=\"{:.3}\"];",
            quote(&model.alphabet[edge.source]),
            quote(&model.alphabet[edge.target]),
            edge.dependency
        );
    }
    out.push_str("}\n");
    out
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

struct Cursor<'a> {
    rest: &'a str,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Dot {
            line: self.line,
            message: message.into(),
        }
    }

    fn skip_ws(&mut self) {
        self.rest = self.rest.trim_start();
    }

    fn eat(&mut self, token: &str) -> bool {
        self.skip_ws();
        if let Some(r) = self.rest.strip_prefix(token) {
            self.rest = r;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, token: &str) -> Result<()> {
        if self.eat(token) {
            Ok(())
        } else {
            Err(self.err(format!("expected `{token}`")))
        }
    }

    fn quoted(&mut self) -> Result<String> {
        self.skip_ws();
        let mut chars = self.rest.char_indices();
        if !matches!(chars.next(), Some((_, '"'))) {
            return Err(self.err("expected quoted identifier"));
        }
        let mut out = String::new();
        while let Some((i, c)) = chars.next() {
            match c {
                '"' => {
                    self.rest = &self.rest[i + 1..];
                    return Ok(out);
                }
                '\\' => match chars.next() {
                    Some((_, 'n')) => out.push('\n'),
                    Some((_, c)) => out.push(c),
                    None => break,
                },
                c => out.push(c),
            }
        }
        Err(self.err("unterminated string"))
    }

    fn ident(&mut self) -> Result<&'a str> {
        self.skip_ws();
        let end = self
            .rest
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(self.rest.len());
        if end == 0 {
            return Err(self.err("expected identifier"));
        }
        let (id, rest) = self.rest.split_at(end);
        self.rest = rest;
        Ok(id)
    }

    /// Parses `[key="value", ...]`.
    fn attributes(&mut self) -> Result<Vec<(String, String)>> {
        self.expect("[")?;
        let mut attrs = Vec::new();
        if self.eat("]") {
            return Ok(attrs);
        }
        loop {
            let key = self.ident()?.to_owned();
            self.expect("=")?;
            let value = self.quoted()?;
            attrs.push((key, value));
            if self.eat("]") {
                return Ok(attrs);
            }
            self.expect(",")?;
        }
    }

    fn end_statement(&mut self) -> Result<()> {
        self.expect(";")?;
        self.skip_ws();
        if !self.rest.is_empty() {
            return Err(self.err(format!("unexpected trailing text {:?}", self.rest)));
        }
        Ok(())
    }
}

/// Reads a model written by [`export_dot`]. Any other DOT construct is a parse
/// error naming its line.
pub fn parse_dot(text: &str) -> Result<ProcessModel> {
    let mut alphabet: Vec<String> = Vec::new();
    let mut edges: Vec<Edge> = Vec::new();
    let mut threshold = 0.0;
    let mut mapping = None;
    let mut opened = false;
    let mut closed = false;

    for (i, raw) in text.lines().enumerate() {
        let mut cur = Cursor {
            rest: raw.trim(),
            line: i + 1,
        };
        if cur.rest.is_empty() || cur.rest.starts_with("//") {
            continue;
        }
        if closed {
            return Err(cur.err("content after closing brace"));
        }
        if !opened {
            cur.expect("digraph")?;
            if cur.rest.trim_start().starts_with('"') {
                cur.quoted()?;
            } else {
                cur.ident()?;
            }
            cur.expect("{")?;
            cur.skip_ws();
            if !cur.rest.is_empty() {
                return Err(cur.err("expected end of line after `{`"));
            }
            opened = true;
            continue;
        }
        if cur.eat("}") {
            cur.skip_ws();
            if !cur.rest.is_empty() {
                return Err(cur.err("unexpected text after `}`"));
            }
            closed = true;
            continue;
        }
        if cur.rest.starts_with("graph") {
            cur.expect("graph")?;
            for (key, value) in cur.attributes()? {
                match key.as_str() {
                    "threshold" => {
                        threshold = value
                            .parse()
                            .map_err(|_| cur.err(format!("bad threshold {value:?}")))?;
                    }
                    "mapping" => mapping = Some(parse_mapping(&value).map_err(|m| cur.err(m))?),
                    other => return Err(cur.err(format!("unsupported graph attribute {other:?}"))),
                }
            }
            cur.end_statement()?;
            continue;
        }

        let source = cur.quoted()?;
        if cur.eat("->") {
            let target = cur.quoted()?;
            let mut dependency = f64::NAN;
            if cur.rest.trim_start().starts_with('[') {
                for (key, value) in cur.attributes()? {
                    if key != "label" {
                        return Err(cur.err(format!("unsupported edge attribute {key:?}")));
                    }
                    dependency = value
                        .parse()
                        .map_err(|_| cur.err(format!("bad edge label {value:?}")))?;
                }
            }
            cur.end_statement()?;
            let lookup = |name: &str| {
                alphabet
                    .iter()
                    .position(|a| a == name)
                    .ok_or_else(|| cur.err(format!("edge references undeclared node {name:?}")))
            };
            edges.push(Edge {
                source: lookup(&source)?,
                target: lookup(&target)?,
                dependency,
            });
        } else {
            cur.end_statement()?;
            if alphabet.contains(&source) {
                return Err(cur.err(format!("duplicate node {source:?}")));
            }
            alphabet.push(source);
        }
    }

    if !opened {
        return Err(Error::Dot {
            line: text.lines().count().max(1),
            message: "missing `digraph` header".into(),
        });
    }
    if !closed {
        return Err(Error::Dot {
            line: text.lines().count(),
            message: "missing closing brace".into(),
        });
    }
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Threshold(threshold));
    }
    Ok(ProcessModel::new(alphabet, edges, threshold, mapping))
}

/// Parses `case,activity,resource[,timestamp]` column indices.
pub fn parse_mapping(text: &str) -> std::result::Result<ColumnMapping, String> {
    let cols: Vec<usize> = text
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| format!("bad column mapping {text:?}"))?;
    match cols.as_slice() {
        [c, a, r] => Ok(ColumnMapping::new(*c, *a, *r)),
        [c, a, r, t] => Ok(ColumnMapping::new(*c, *a, *r).with_timestamp(*t)),
        _ => Err(format!("column mapping needs 3 or 4 indices, got {text:?}")),
    }
}
