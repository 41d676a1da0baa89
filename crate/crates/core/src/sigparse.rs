//! Operator signatures: `a(n); indx b(); [o,nc]c()`.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! sig   := param (';' param)* [';']
//! param := [dtype ['+']] ['[' flag (',' flag)* ']'] name ['(' [dim (',' dim)*] ')']
//! dim   := ident ['=' int]
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::ndarray::Dtype;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SigError {
    #[error("syntax error at {pos}: {msg}")]
    SyntaxError { pos: usize, msg: String },
    #[error("duplicate parameter '{0}'")]
    DuplicateParam(String),
    #[error("parameter '{param}': flags '{a}' and '{b}' conflict")]
    ConflictingFlags { param: String, a: String, b: String },
    #[error("unknown flag '{0}'")]
    UnknownFlag(String),
    #[error("unknown type '{0}'")]
    UnknownType(String),
    #[error("dimension '{dim}' fixed to both {a} and {b}")]
    ConflictingFixedSize { dim: String, a: usize, b: usize },
    #[error("every parameter is a temporary")]
    AllTemporaries,
}

/// One named active dim of a parameter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DimRef {
    pub name: String,
    pub fixed_size: Option<usize>,
    /// Set when the name repeats inside one parameter (`n` → `n0`, `n1`).
    pub rename_index: Option<usize>,
}

impl DimRef {
    /// The name kernels and plans use for this dim (`n` or `n0`).
    pub fn key(&self) -> String {
        match self.rename_index {
            Some(i) => format!("{}{}", self.name, i),
            None => self.name.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ParamFlags {
    pub io: bool,
    pub nc: bool,
    pub o: bool,
    pub oca: bool,
    pub t: bool,
    pub phys: bool,
}

impl ParamFlags {
    const NAMES: [&'static str; 6] = ["io", "nc", "o", "oca", "t", "phys"];

    fn get(&self, name: &str) -> bool {
        match name {
            "io" => self.io,
            "nc" => self.nc,
            "o" => self.o,
            "oca" => self.oca,
            "t" => self.t,
            "phys" => self.phys,
            _ => false,
        }
    }

    fn set(&mut self, name: &str) -> bool {
        let slot = match name {
            "io" => &mut self.io,
            "nc" => &mut self.nc,
            "o" => &mut self.o,
            "oca" => &mut self.oca,
            "t" => &mut self.t,
            "phys" => &mut self.phys,
            _ => return false,
        };
        *slot = true;
        true
    }

    fn names(&self) -> Vec<&'static str> {
        Self::NAMES.iter().copied().filter(|n| self.get(n)).collect()
    }

    fn conflict(&self) -> Option<(&'static str, &'static str)> {
        const PAIRS: [(&str, &str); 7] = [
            ("t", "o"),
            ("t", "oca"),
            ("t", "io"),
            ("t", "nc"),
            ("o", "oca"),
            ("io", "o"),
            ("io", "oca"),
        ];
        PAIRS.iter().copied().find(|(a, b)| self.get(a) && self.get(b))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub flags: ParamFlags,
    pub forced_dtype: Option<Dtype>,
    pub plus_flag: bool,
    pub active_dims: Vec<DimRef>,
}

impl ParamSpec {
    pub fn is_temp(&self) -> bool {
        self.flags.t
    }

    /// Written by the kernel: `[o]`, `[oca]` or `[io]`.
    pub fn is_output(&self) -> bool {
        self.flags.o || self.flags.oca || self.flags.io
    }

    /// Read by the kernel and supplied by the caller: plain inputs and `[io]`.
    pub fn is_input(&self) -> bool {
        !self.flags.t && !self.flags.o && !self.flags.oca
    }

    /// Outputs the engine may create (`[o]` without `nc`, and `[oca]`).
    pub fn may_autocreate(&self) -> bool {
        (self.flags.o && !self.flags.nc) || self.flags.oca
    }

    pub fn dim_keys(&self) -> Vec<String> {
        self.active_dims.iter().map(DimRef::key).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Signature {
    pub params: Vec<ParamSpec>,
    pub dim_names: BTreeSet<String>,
}

impl Signature {
    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    /// Fixed size declared for a dim key anywhere in the signature.
    pub fn fixed_size(&self, key: &str) -> Option<usize> {
        self.params
            .iter()
            .flat_map(|p| p.active_dims.iter())
            .find(|d| d.key() == key && d.fixed_size.is_some())
            .and_then(|d| d.fixed_size)
    }
}

impl fmt::Display for Signature {
    /// Canonical form: `float+ [o,nc]c(n,n=3); d()`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, p) in self.params.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            if let Some(t) = p.forced_dtype {
                write!(f, "{}{} ", t.name(), if p.plus_flag { "+" } else { "" })?;
            }
            let flags = p.flags.names();
            if !flags.is_empty() {
                write!(f, "[{}]", flags.join(","))?;
            }
            write!(f, "{}(", p.name)?;
            for (k, d) in p.active_dims.iter().enumerate() {
                if k > 0 {
                    f.write_str(",")?;
                }
                f.write_str(&d.name)?;
                if let Some(s) = d.fixed_size {
                    write!(f, "={s}")?;
                }
            }
            f.write_str(")")?;
        }
        Ok(())
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, SigError> {
        Err(SigError::SyntaxError { pos: self.pos, msg: msg.into() })
    }

    fn expect(&mut self, c: u8) -> Result<(), SigError> {
        if self.eat(c) {
            Ok(())
        } else {
            self.err(format!("expected '{}'", c as char))
        }
    }

    fn ident(&mut self) -> Result<String, SigError> {
        self.skip_ws();
        let start = self.pos;
        match self.src.get(self.pos) {
            Some(c) if c.is_ascii_alphabetic() || *c == b'_' => {}
            _ => return self.err("expected identifier"),
        }
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        Ok(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
    }

    fn int(&mut self) -> Result<usize, SigError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return self.err("expected integer");
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("0");
        text.parse().or_else(|_| self.err("integer too large"))
    }

    fn param(&mut self) -> Result<ParamSpec, SigError> {
        let mut forced_dtype = None;
        let mut plus_flag = false;
        let mut flags = ParamFlags::default();

        let name = if self.peek() == Some(b'[') {
            self.flags(&mut flags)?;
            self.ident()?
        } else {
            let first = self.ident()?;
            match self.peek() {
                Some(b'+') | Some(b'[') => {
                    let t = Dtype::from_name(&first).ok_or(SigError::UnknownType(first))?;
                    forced_dtype = Some(t);
                    plus_flag = self.eat(b'+');
                    if self.peek() == Some(b'[') {
                        self.flags(&mut flags)?;
                    }
                    self.ident()?
                }
                Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                    let t = Dtype::from_name(&first).ok_or(SigError::UnknownType(first))?;
                    forced_dtype = Some(t);
                    self.ident()?
                }
                _ => first,
            }
        };

        if let Some((a, b)) = flags.conflict() {
            return Err(SigError::ConflictingFlags { param: name, a: a.into(), b: b.into() });
        }

        let mut dims: Vec<DimRef> = Vec::new();
        if self.eat(b'(') {
            if !self.eat(b')') {
                loop {
                    let dname = self.ident()?;
                    let fixed_size = if self.eat(b'=') {
                        let n = self.int()?;
                        if n == 0 {
                            return self.err("fixed dimension size must be at least 1");
                        }
                        Some(n)
                    } else {
                        None
                    };
                    dims.push(DimRef { name: dname, fixed_size, rename_index: None });
                    if self.eat(b')') {
                        break;
                    }
                    self.expect(b',')?;
                }
            }
        }
        rename_square(&mut dims);
        Ok(ParamSpec { name, flags, forced_dtype, plus_flag, active_dims: dims })
    }

    fn flags(&mut self, flags: &mut ParamFlags) -> Result<(), SigError> {
        self.expect(b'[')?;
        if self.eat(b']') {
            return Ok(());
        }
        loop {
            let f = self.ident()?;
            if !flags.set(&f) {
                return Err(SigError::UnknownFlag(f));
            }
            if self.eat(b']') {
                return Ok(());
            }
            self.expect(b',')?;
        }
    }
}

/// Renames dims that repeat within one parameter to `name0`, `name1`, ...
fn rename_square(dims: &mut [DimRef]) {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for d in dims.iter() {
        *counts.entry(d.name.clone()).or_default() += 1;
    }
    let mut next: BTreeMap<String, usize> = BTreeMap::new();
    for d in dims.iter_mut() {
        if counts[&d.name] > 1 {
            let i = next.entry(d.name.clone()).or_default();
            d.rename_index = Some(*i);
            *i += 1;
        }
    }
}

pub fn parse_signature(text: &str) -> Result<Signature, SigError> {
    let mut p = Parser { src: text.as_bytes(), pos: 0 };
    let mut params: Vec<ParamSpec> = Vec::new();
    loop {
        if p.peek().is_none() {
            break;
        }
        let param = p.param()?;
        if params.iter().any(|q| q.name == param.name) {
            return Err(SigError::DuplicateParam(param.name));
        }
        params.push(param);
        if p.peek().is_none() {
            break;
        }
        p.expect(b';')?;
    }
    if params.is_empty() {
        return p.err("signature declares no parameters");
    }
    let dim_names = params
        .iter()
        .flat_map(|q| q.active_dims.iter().map(DimRef::key))
        .collect();
    Ok(Signature { params, dim_names })
}

pub fn validate_signature(s: &Signature) -> Result<(), SigError> {
    let mut fixed: BTreeMap<String, usize> = BTreeMap::new();
    for d in s.params.iter().flat_map(|p| p.active_dims.iter()) {
        if let Some(n) = d.fixed_size {
            match fixed.get(&d.key()) {
                Some(&m) if m != n => {
                    return Err(SigError::ConflictingFixedSize { dim: d.key(), a: m, b: n })
                }
                _ => {
                    fixed.insert(d.key(), n);
                }
            }
        }
    }
    if s.params.iter().all(ParamSpec::is_temp) {
        return Err(SigError::AllTemporaries);
    }
    Ok(())
}

/// Parse then validate.
pub fn signature(text: &str) -> Result<Signature, SigError> {
    let s = parse_signature(text)?;
    validate_signature(&s)?;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn keys(p: &ParamSpec) -> Vec<String> {
        p.dim_keys()
    }

    #[test]
    fn basic_signature() {
        let s = parse_signature("a(n); indx b(); [o,nc]c()").unwrap();
        assert_eq!(s.params.len(), 3);
        assert_eq!(keys(&s.params[0]), vec!["n"]);
        assert_eq!(s.params[1].forced_dtype, Some(Dtype::Indx));
        assert!(s.params[1].active_dims.is_empty());
        assert!(s.params[2].flags.o && s.params[2].flags.nc);
        assert!(s.params[2].active_dims.is_empty());
    }

    #[test]
    fn square_dims_renamed() {
        let s = parse_signature("a(n,n); b(n,n)").unwrap();
        assert_eq!(keys(&s.params[0]), vec!["n0", "n1"]);
        assert_eq!(keys(&s.params[1]), vec!["n0", "n1"]);
        assert_eq!(s.dim_names.iter().cloned().collect::<Vec<_>>(), vec!["n0", "n1"]);
    }

    #[test]
    fn missing_parens_and_trailing_semicolon() {
        let s = parse_signature("vec(n); [o]len;").unwrap();
        assert_eq!(s.params.len(), 2);
        assert_eq!(s.params[1].name, "len");
        assert!(s.params[1].active_dims.is_empty());
    }

    #[test]
    fn plus_type() {
        let s = parse_signature("float+ a(); b(m,n); [o]c").unwrap();
        assert_eq!(s.params[0].forced_dtype, Some(Dtype::Float));
        assert!(s.params[0].plus_flag);
        assert_eq!(keys(&s.params[1]), vec!["m", "n"]);
    }

    #[test]
    fn errors() {
        assert!(matches!(parse_signature("a(); a()"), Err(SigError::DuplicateParam(_))));
        assert!(matches!(parse_signature("[t,o]x(n); a()"), Err(SigError::ConflictingFlags { .. })));
        assert!(matches!(parse_signature("[o,oca]x()"), Err(SigError::ConflictingFlags { .. })));
        assert!(matches!(parse_signature("[out]x()"), Err(SigError::UnknownFlag(_))));
        assert!(matches!(parse_signature("quad x()"), Err(SigError::UnknownType(_))));
        assert!(matches!(parse_signature("a(n"), Err(SigError::SyntaxError { .. })));
        assert!(matches!(parse_signature(""), Err(SigError::SyntaxError { .. })));
        assert!(matches!(parse_signature("a(n=0)"), Err(SigError::SyntaxError { .. })));
    }

    #[test]
    fn validation() {
        assert!(signature("a(n=2); b(n=2)").is_ok());
        assert_eq!(
            signature("a(n=2); b(n=3)"),
            Err(SigError::ConflictingFixedSize { dim: "n".into(), a: 2, b: 3 })
        );
        assert_eq!(signature("[t]x(n)"), Err(SigError::AllTemporaries));
    }

    #[test]
    fn nc_on_input_accepted() {
        let s = signature("[nc]a(); [o]b()").unwrap();
        assert!(s.params[0].is_input());
    }

    #[test]
    fn display_canonical() {
        let s = parse_signature("float+[o,nc]c(n,n=3);d").unwrap();
        assert_eq!(s.to_string(), "float+ [nc,o]c(n,n=3); d()");
    }

    fn arb_param(name: String) -> impl Strategy<Value = ParamSpec> {
        let dims = prop::collection::vec(
            (prop::sample::select(vec!["n", "m", "k"]), prop::option::of(1usize..5)),
            0..4,
        );
        let flags = prop::sample::select(vec![
            ParamFlags::default(),
            ParamFlags { o: true, ..Default::default() },
            ParamFlags { o: true, nc: true, ..Default::default() },
            ParamFlags { oca: true, ..Default::default() },
            ParamFlags { io: true, ..Default::default() },
            ParamFlags { t: true, ..Default::default() },
            ParamFlags { phys: true, ..Default::default() },
        ]);
        let ty = prop::option::of((prop::sample::select(Dtype::ALL.to_vec()), any::<bool>()));
        (dims, flags, ty).prop_map(move |(dims, flags, ty)| {
            let mut active: Vec<DimRef> = dims
                .into_iter()
                .map(|(n, f)| DimRef { name: n.to_string(), fixed_size: f, rename_index: None })
                .collect();
            rename_square(&mut active);
            ParamSpec {
                name: name.clone(),
                flags,
                forced_dtype: ty.map(|t| t.0),
                plus_flag: ty.map(|t| t.1).unwrap_or(false),
                active_dims: active,
            }
        })
    }

    fn arb_sig() -> impl Strategy<Value = Signature> {
        (1usize..5)
            .prop_flat_map(|n| {
                (0..n).map(|i| arb_param(format!("p{i}"))).collect::<Vec<_>>()
            })
            .prop_map(|params| {
                let dim_names = params
                    .iter()
                    .flat_map(|q| q.active_dims.iter().map(DimRef::key))
                    .collect();
                Signature { params, dim_names }
            })
    }

    proptest! {
        #[test]
        fn format_reparse_roundtrip(s in arb_sig()) {
            let text = s.to_string();
            let back = parse_signature(&text).unwrap();
            prop_assert_eq!(back, s);
        }

        #[test]
        fn square_renaming_order(k in 1usize..6) {
            let dims = vec!["d"; k].join(",");
            let s = parse_signature(&format!("a({dims}); b({dims})")).unwrap();
            let expect: Vec<String> = if k == 1 {
                vec!["d".into()]
            } else {
                (0..k).map(|i| format!("d{i}")).collect()
            };
            prop_assert_eq!(keys(&s.params[0]), expect.clone());
            prop_assert_eq!(keys(&s.params[1]), expect);
        }
    }
}
