//! Operator definition files.
//!
//! ```text
//! op linscale
//! pars: a(); b(); c(); [o]o()
//! code {
//!     $o() = $a() * $b() + $c();
//! }
//! end
//! ```
//!
//! A kernel body opens with `KEY {` and closes at a line holding only `}`
//! in column 0, or on the same line (`code { $o() = 1; }`). Lines starting
//! with `#` outside bodies are comments.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::engine::{parse_decls, EngineError, HandleBad, OpDef};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OpdefError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key '{key}' given twice")]
    DuplicateKey { line: usize, key: String },
    #[error("op '{op}': {msg}")]
    Incomplete { op: String, msg: String },
    #[error("op '{op}': {err}")]
    Engine { op: String, err: Box<EngineError> },
}

const SCALAR_KEYS: [&str; 11] = [
    "pars",
    "otherpars",
    "generictypes",
    "handlebad",
    "inplace",
    "reversible",
    "p2child",
    "defaultflow",
    "boundscheck",
    "comp",
    "nopthread",
];

const KERNEL_KEYS: [&str; 8] =
    ["code", "badcode", "backcode", "badbackcode", "equivcpoffs", "redodimscode", "makecomp", "redodims"];

fn syntax(line: usize, msg: impl Into<String>) -> OpdefError {
    OpdefError::Syntax { line, msg: msg.into() }
}

fn flag(v: &str, line: usize) -> Result<bool, OpdefError> {
    match v {
        "1" | "true" | "yes" => Ok(true),
        "0" | "false" | "no" => Ok(false),
        _ => Err(syntax(line, format!("expected a boolean, got '{v}'"))),
    }
}

struct Pending {
    name: String,
    line: usize,
    scalars: BTreeMap<String, (usize, String)>,
    kernels: Vec<(String, String)>,
}

impl Pending {
    fn build(self) -> Result<OpDef, OpdefError> {
        let op = self.name.clone();
        let eng = |err| OpdefError::Engine { op: op.clone(), err: Box::new(err) };
        let get = |k: &str| self.scalars.get(k);
        let p2child = match get("p2child") {
            Some((l, v)) => flag(v, *l)?,
            None => false,
        };
        let mut def = match (get("pars"), p2child) {
            (Some(_), true) => {
                return Err(OpdefError::Incomplete { op, msg: "both pars and p2child given".into() })
            }
            (None, false) => return Err(OpdefError::Incomplete { op, msg: "missing pars".into() }),
            (Some((_, pars)), false) => OpDef::new(&self.name, pars).map_err(eng)?,
            (None, true) => OpDef::p2child(&self.name),
        };
        for (key, (line, v)) in &self.scalars {
            let line = *line;
            match key.as_str() {
                "otherpars" => def.otherpars = parse_decls(v).map_err(eng)?,
                "comp" => def.flow.comp = parse_decls(v).map_err(eng)?,
                "generictypes" => def = def.with_generictypes(v).map_err(eng)?,
                "handlebad" => {
                    def.handlebad = match v.as_str() {
                        "0" | "forbid" => HandleBad::Forbid,
                        "1" | "handle" => HandleBad::Handle,
                        "ignore" => HandleBad::Ignore,
                        _ => return Err(syntax(line, format!("bad handlebad value '{v}'"))),
                    }
                }
                "inplace" => {
                    let names: Vec<&str> = v.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
                    match names.as_slice() {
                        [a, b] => def = def.with_inplace(a, b),
                        _ => return Err(syntax(line, "inplace takes two parameter names")),
                    }
                }
                "reversible" => def.flow.reversible = flag(v, line)?,
                "defaultflow" => def.flow.defaultflow = flag(v, line)?,
                "boundscheck" => def.boundscheck = flag(v, line)?,
                "nopthread" => def.nopthread = flag(v, line)?,
                _ => {}
            }
        }
        for (k, body) in &self.kernels {
            def.set_kernel(k, body).map_err(eng)?;
        }
        Ok(def)
    }
}

/// Parses every `op … end` section in `text`.
pub fn parse_opdefs(text: &str) -> Result<Vec<OpDef>, OpdefError> {
    let lines: Vec<&str> = text.lines().collect();
    let mut defs = Vec::new();
    let mut cur: Option<Pending> = None;
    let mut i = 0;
    while i < lines.len() {
        let raw = lines[i];
        let lno = i + 1;
        i += 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let Some(p) = cur.as_mut() else {
            match t.strip_prefix("op ") {
                Some(name) if !name.trim().is_empty() => {
                    cur = Some(Pending {
                        name: name.trim().to_string(),
                        line: lno,
                        scalars: BTreeMap::new(),
                        kernels: Vec::new(),
                    })
                }
                _ => return Err(syntax(lno, format!("expected 'op NAME', got '{t}'"))),
            }
            continue;
        };
        if t == "end" {
            defs.push(cur.take().expect("inside op").build()?);
            continue;
        }
        let colon = t.find(':');
        let brace = t.find('{');
        if let (Some(c), true) = (colon, brace.is_none_or(|b| colon < Some(b))) {
            let (key, rest) = (t[..c].trim(), &t[c + 1..]);
            if !SCALAR_KEYS.contains(&key) {
                return Err(OpdefError::UnknownKey { line: lno, key: key.to_string() });
            }
            if p.scalars.insert(key.to_string(), (lno, rest.trim().to_string())).is_some() {
                return Err(OpdefError::DuplicateKey { line: lno, key: key.to_string() });
            }
            continue;
        }
        let Some((key, rest)) = t.split_once('{') else {
            return Err(syntax(lno, format!("expected 'key: value' or 'key {{', got '{t}'")));
        };
        let key = key.trim();
        if !KERNEL_KEYS.contains(&key) {
            return Err(OpdefError::UnknownKey { line: lno, key: key.to_string() });
        }
        if p.kernels.iter().any(|(k, _)| k == key) {
            return Err(OpdefError::DuplicateKey { line: lno, key: key.to_string() });
        }
        let rest = rest.trim();
        let body = if let Some(inner) = rest.strip_suffix('}') {
            inner.trim().to_string()
        } else {
            let mut body: Vec<&str> = Vec::new();
            if !rest.is_empty() {
                body.push(rest);
            }
            loop {
                let Some(l) = lines.get(i) else {
                    return Err(syntax(lno, format!("unterminated '{key}' body")));
                };
                i += 1;
                if l.trim_end() == "}" {
                    break;
                }
                body.push(l);
            }
            dedent(&body)
        };
        p.kernels.push((key.to_string(), body));
    }
    if let Some(p) = cur {
        return Err(syntax(p.line, format!("op '{}' lacks 'end'", p.name)));
    }
    Ok(defs)
}

fn dedent(lines: &[&str]) -> String {
    let indent = lines
        .iter()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.len() - l.trim_start().len())
        .min()
        .unwrap_or(0);
    let mut out = String::new();
    for l in lines {
        out.push_str(l.get(indent..).unwrap_or("").trim_end());
        out.push('\n');
    }
    out
}
