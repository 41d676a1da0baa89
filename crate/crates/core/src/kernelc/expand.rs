//! Lowering of elaborated kernels to loop-nest text.
//!
//! The dialect is C-like. Each parameter `p` gets a typed data pointer `P_p`,
//! a per-thread-tuple base offset `__toff_p` and one stride symbol
//! `__inc_p_d` per active dim `d`. Dim sizes are `__d_size`, other parameters
//! live behind `__comp->name`, and the thread sweep is a single counted loop
//! `_t0` over `__tnvals` tuples.

use std::collections::BTreeSet;
use std::fmt::Write;

use super::ast::{BinOp, KernelAst};
use super::elaborate::*;
use super::{format, KernelError, Variant};
use crate::ndarray::Scalar;

/// Elaborates `ast` under `env` and expands it.
pub fn expand_kernel(ast: &KernelAst, env: &ElabEnv, name: &str, bounds: bool) -> Result<String, KernelError> {
    let prog = elaborate(ast, env)?;
    Ok(expand_program(&prog, name, bounds))
}

pub fn expand_program(prog: &Program, name: &str, bounds: bool) -> String {
    let mut x = Expander { prog, bounds, out: String::new(), bad_params: BTreeSet::new() };
    for s in &prog.stmts {
        x.scan_stmt(s);
    }
    x.run(name);
    x.out
}

const P_ASSIGN: u8 = 1;
const P_TERNARY: u8 = 2;
const P_UNARY: u8 = 9;
const P_POSTFIX: u8 = 11;
const P_PRIMARY: u8 = 12;

struct Expander<'p> {
    prog: &'p Program,
    bounds: bool,
    out: String,
    bad_params: BTreeSet<usize>,
}

impl<'p> Expander<'p> {
    fn scan_stmt(&mut self, s: &IStmt) {
        match s {
            IStmt::Declare(_, e) => {
                if let Some(e) = e {
                    self.scan_expr(e)
                }
            }
            IStmt::Eval(e) | IStmt::SetNdims(e) => self.scan_expr(e),
            IStmt::If(c, a, b) => {
                self.scan_expr(c);
                a.iter().chain(b).for_each(|s| self.scan_stmt(s));
            }
            IStmt::For(i, c, st, b) => {
                if let Some(c) = c {
                    self.scan_expr(c);
                }
                i.iter().chain(st).chain(b).for_each(|s| self.scan_stmt(s));
            }
            IStmt::While(c, b) => {
                self.scan_expr(c);
                b.iter().for_each(|s| self.scan_stmt(s));
            }
            IStmt::Block(b) | IStmt::Seq(b) | IStmt::Loop(_, b) | IStmt::ThreadLoop(b) => {
                b.iter().for_each(|s| self.scan_stmt(s))
            }
            IStmt::SetBad(a) => {
                self.bad_params.insert(a.param);
                self.scan_access(a);
            }
            IStmt::EquivCp(a, b, c) => {
                self.scan_expr(a);
                self.scan_expr(b);
                if let Some(c) = c {
                    self.scan_expr(c);
                }
            }
            IStmt::Break | IStmt::Continue | IStmt::StateSet { .. } | IStmt::SetDims => {}
        }
    }

    fn scan_access(&mut self, a: &IAccess) {
        for i in &a.idx {
            if let IIndex::Expr(e) = i {
                self.scan_expr(e);
            }
        }
    }

    fn scan_lvalue(&mut self, l: &Lvalue) {
        match l {
            Lvalue::Access(a) => self.scan_access(a),
            Lvalue::CompIndex(_, e) => self.scan_expr(e),
            Lvalue::Meta(_, IMeta::Dims(e) | IMeta::Dimincs(e)) => self.scan_expr(e),
            _ => {}
        }
    }

    fn scan_expr(&mut self, e: &IExpr) {
        match e {
            IExpr::Access(a) => self.scan_access(a),
            IExpr::IsBad { access, .. } => {
                self.bad_params.insert(access.param);
                self.scan_access(access);
            }
            IExpr::IsBadVar { param, .. } | IExpr::SetBadVar { param, .. } => {
                self.bad_params.insert(*param);
            }
            IExpr::CompIndex(_, x) | IExpr::BareIndex(_, x) | IExpr::Neg(x) | IExpr::Not(x) | IExpr::Cast(_, x) => {
                self.scan_expr(x)
            }
            IExpr::Meta(_, IMeta::Dims(x) | IMeta::Dimincs(x)) => self.scan_expr(x),
            IExpr::Call(_, args) => args.iter().for_each(|a| self.scan_expr(a)),
            IExpr::Binary(_, a, b) => {
                self.scan_expr(a);
                self.scan_expr(b);
            }
            IExpr::Ternary(a, b, c) => {
                self.scan_expr(a);
                self.scan_expr(b);
                self.scan_expr(c);
            }
            IExpr::Assign(l, _, r) => {
                self.scan_lvalue(l);
                self.scan_expr(r);
            }
            IExpr::IncDec { target, .. } => self.scan_lvalue(target),
            _ => {}
        }
    }

    fn line(&mut self, indent: usize, text: &str) {
        for _ in 0..indent {
            self.out.push_str("    ");
        }
        self.out.push_str(text);
        self.out.push('\n');
    }

    fn run(&mut self, name: &str) {
        let p = self.prog;
        let header = format!(
            "/* {name}: {}, generic={}, variant={}, bounds={} */",
            p.ctx,
            p.generic.name(),
            p.variant,
            if self.bounds { "on" } else { "off" }
        );
        self.line(0, &header);
        self.line(0, "{");
        for (i, pname) in p.params.iter().enumerate() {
            let t = p.param_types[i].c_name();
            self.line(1, &format!("{t} *P_{pname} = ({t} *) __pdl_{pname}->data;"));
        }
        for &i in &self.bad_params.clone() {
            let pname = &p.params[i];
            let t = p.param_types[i].c_name();
            self.line(1, &format!("{t} __bad_{pname} = PDL_BADVAL(__pdl_{pname});"));
        }
        for pname in &p.params {
            self.line(1, &format!("PDL_Indx __toff_{pname} = 0;"));
        }
        if p.has_threadloop {
            for s in &p.stmts {
                self.stmt(1, s);
            }
        } else {
            self.thread_loop(1, &p.stmts);
        }
        self.line(0, "}");
    }

    fn thread_loop(&mut self, indent: usize, body: &[IStmt]) {
        let p = self.prog;
        self.line(indent, "for (PDL_Indx _t0 = 0; _t0 < __tnvals; _t0++) {");
        for (i, pname) in p.params.iter().enumerate() {
            if !p.param_is_temp[i] {
                self.line(indent + 1, &format!("__toff_{pname} = THREAD_OFFSET({pname}, _t0);"));
            }
        }
        for s in body {
            self.stmt(indent + 1, s);
        }
        self.line(indent, "}");
    }

    fn block(&mut self, indent: usize, body: &[IStmt]) {
        for s in body {
            self.stmt(indent, s);
        }
    }

    /// Statement text without the trailing `;`, for `for` headers.
    fn simple(&self, s: &IStmt) -> String {
        match s {
            IStmt::Declare(slot, init) => {
                let l = &self.prog.locals[*slot];
                match init {
                    Some(e) => format!("{} {} = {}", l.ty.c_name(), l.name, self.wrap(e, P_ASSIGN)),
                    None => format!("{} {} = 0", l.ty.c_name(), l.name),
                }
            }
            IStmt::Eval(e) => self.expr(e),
            IStmt::Seq(v) => v.iter().map(|s| self.simple(s)).collect::<Vec<_>>().join(", "),
            _ => String::new(),
        }
    }

    fn stmt(&mut self, indent: usize, s: &IStmt) {
        match s {
            IStmt::Declare(..) | IStmt::Eval(_) => {
                let t = format!("{};", self.simple(s));
                self.line(indent, &t);
            }
            IStmt::If(c, a, b) => {
                let t = format!("if ({}) {{", self.expr(c));
                self.line(indent, &t);
                self.block(indent + 1, a);
                if b.is_empty() {
                    self.line(indent, "}");
                } else {
                    self.line(indent, "} else {");
                    self.block(indent + 1, b);
                    self.line(indent, "}");
                }
            }
            IStmt::For(init, c, step, body) => {
                let i = init.first().map(|s| self.simple(s)).unwrap_or_default();
                let c = c.as_ref().map(|c| self.expr(c)).unwrap_or_default();
                let st = step.first().map(|s| self.simple(s)).unwrap_or_default();
                self.line(indent, &format!("for ({i}; {c}; {st}) {{"));
                self.block(indent + 1, body);
                self.line(indent, "}");
            }
            IStmt::While(c, body) => {
                let t = format!("while ({}) {{", self.expr(c));
                self.line(indent, &t);
                self.block(indent + 1, body);
                self.line(indent, "}");
            }
            IStmt::Block(body) => {
                self.line(indent, "{");
                self.block(indent + 1, body);
                self.line(indent, "}");
            }
            IStmt::Seq(body) => self.block(indent, body),
            IStmt::Loop(d, body) => {
                let dn = &self.prog.dims[*d];
                self.line(indent, &format!("for (PDL_Indx {dn} = 0; {dn} < __{dn}_size; {dn}++) {{"));
                self.block(indent + 1, body);
                self.line(indent, "}");
            }
            IStmt::ThreadLoop(body) => self.thread_loop(indent, body),
            IStmt::Break => self.line(indent, "break;"),
            IStmt::Continue => self.line(indent, "continue;"),
            IStmt::SetBad(a) => {
                let pname = &self.prog.params[a.param];
                let t = format!("{} = __bad_{pname};", self.access(a));
                self.line(indent, &t);
                if self.prog.variant == Variant::Good {
                    self.line(indent, &format!("__pdl_{pname}->state |= PDL_BADVAL;"));
                }
            }
            IStmt::StateSet { param, bad } => {
                let pname = &self.prog.params[*param];
                if *bad {
                    self.line(indent, &format!("__pdl_{pname}->state |= PDL_BADVAL;"));
                } else {
                    self.line(indent, &format!("__pdl_{pname}->state &= ~PDL_BADVAL;"));
                }
            }
            IStmt::SetNdims(e) => {
                let t = format!("PDL_SETNDIMS(__pdl_CHILD, {});", self.expr(e));
                self.line(indent, &t);
            }
            IStmt::SetDims => self.line(indent, "PDL_SETDIMS(__pdl_CHILD);"),
            IStmt::EquivCp(a, b, c) => {
                let t = match c {
                    Some(c) => format!("PDL_EQUIVCP({}, {}, {});", self.expr(a), self.expr(b), self.expr(c)),
                    None => format!("PDL_EQUIVCP({}, {}, 0);", self.expr(a), self.expr(b)),
                };
                self.line(indent, &t);
            }
        }
    }

    fn access(&self, a: &IAccess) -> String {
        let p = self.prog;
        let pname = &p.params[a.param];
        let mut off = format!("__toff_{pname}");
        for (k, ix) in a.idx.iter().enumerate() {
            let dn = &p.param_dims[a.param][k];
            let i = match ix {
                IIndex::Loop(d) => p.dims[*d].clone(),
                IIndex::Expr(e) => self.wrap(e, P_UNARY + 1),
            };
            let i = if self.bounds { format!("PP_CHECK({i}, __{dn}_size)") } else { i };
            let _ = write!(off, " + {i}*__inc_{pname}_{dn}");
        }
        format!("P_{pname}[{off}]")
    }

    fn meta(&self, param: usize, m: &IMeta) -> String {
        let pname = &self.prog.params[param];
        match m {
            IMeta::Ndims => format!("__pdl_{pname}->ndims"),
            IMeta::Datatype => format!("__pdl_{pname}->datatype"),
            IMeta::Nvals => format!("__pdl_{pname}->nvals"),
            IMeta::Dims(i) => format!("__pdl_{pname}->dims[{}]", self.expr(i)),
            IMeta::Dimincs(i) => format!("__pdl_{pname}->dimincs[{}]", self.expr(i)),
        }
    }

    fn lvalue(&self, l: &Lvalue) -> String {
        let p = self.prog;
        match l {
            Lvalue::Local(s) => p.locals[*s].name.clone(),
            Lvalue::Access(a) => self.access(a),
            Lvalue::Size(d) => format!("__{}_size", p.dims[*d]),
            Lvalue::Comp(c) => format!("__comp->{}", p.comp[*c]),
            Lvalue::CompIndex(c, i) => format!("__comp->{}[{}]", p.comp[*c], self.expr(i)),
            Lvalue::Meta(param, m) => self.meta(*param, m),
        }
    }

    fn prec(e: &IExpr) -> u8 {
        match e {
            IExpr::Const(Scalar::Int(i)) if *i < 0 => P_UNARY,
            IExpr::Const(Scalar::Float(f)) if f.is_sign_negative() && !f.is_nan() => P_UNARY,
            IExpr::Assign(..) => P_ASSIGN,
            IExpr::Ternary(..) => P_TERNARY,
            IExpr::Binary(BinOp::Pow, ..) => P_PRIMARY,
            IExpr::Binary(op, ..) => op.precedence() + 2,
            IExpr::Neg(_) | IExpr::Not(_) | IExpr::Cast(..) => P_UNARY,
            IExpr::IncDec { prefix: true, .. } => P_UNARY,
            IExpr::IncDec { prefix: false, .. } => P_POSTFIX,
            IExpr::IsBad { negate: true, .. } | IExpr::IsBadVar { negate: true, .. } => P_UNARY,
            IExpr::StateIsBad { negate: true, .. } => P_UNARY,
            _ => P_PRIMARY,
        }
    }

    fn wrap(&self, e: &IExpr, min: u8) -> String {
        let s = self.expr(e);
        if Self::prec(e) < min {
            format!("({s})")
        } else {
            s
        }
    }

    fn expr(&self, e: &IExpr) -> String {
        let p = self.prog;
        match e {
            IExpr::Const(Scalar::Int(i)) => i.to_string(),
            IExpr::Const(Scalar::Float(f)) => {
                if f.is_nan() {
                    "NAN".into()
                } else if f.is_infinite() {
                    if *f > 0.0 { "INFINITY".into() } else { "-INFINITY".into() }
                } else {
                    format::float_lit(*f)
                }
            }
            IExpr::Local(s) => p.locals[*s].name.clone(),
            IExpr::LoopIndex(d) => p.dims[*d].clone(),
            IExpr::Access(a) => self.access(a),
            IExpr::Size(d) => format!("__{}_size", p.dims[*d]),
            IExpr::Comp(c) => format!("__comp->{}", p.comp[*c]),
            IExpr::CompIndex(c, i) => format!("__comp->{}[{}]", p.comp[*c], self.expr(i)),
            IExpr::Bare(b) => p.bare[*b].clone(),
            IExpr::BareIndex(b, i) => format!("{}[{}]", p.bare[*b], self.expr(i)),
            IExpr::Meta(param, m) => self.meta(*param, m),
            IExpr::Call(b, args) => {
                let a: Vec<String> = args.iter().map(|a| self.wrap(a, P_TERNARY)).collect();
                format!("{}({})", b.name(), a.join(", "))
            }
            IExpr::Neg(x) => {
                let inner = self.wrap(x, P_UNARY);
                if inner.starts_with('-') {
                    format!("- {inner}")
                } else {
                    format!("-{inner}")
                }
            }
            IExpr::Not(x) => format!("!{}", self.wrap(x, P_UNARY)),
            IExpr::Binary(BinOp::Pow, a, b) => {
                format!("pow({}, {})", self.wrap(a, P_TERNARY), self.wrap(b, P_TERNARY))
            }
            IExpr::Binary(op, a, b) => {
                let pr = op.precedence() + 2;
                format!("{} {} {}", self.wrap(a, pr), op.as_str(), self.wrap(b, pr + 1))
            }
            IExpr::Ternary(c, a, b) => format!(
                "{} ? {} : {}",
                self.wrap(c, P_TERNARY + 1),
                self.wrap(a, P_ASSIGN),
                self.wrap(b, P_TERNARY)
            ),
            IExpr::Assign(l, op, r) => {
                let sym = match op {
                    None => "=".to_string(),
                    Some(op) => format!("{}=", op.as_str()),
                };
                format!("{} {sym} {}", self.lvalue(l), self.wrap(r, P_ASSIGN))
            }
            IExpr::IncDec { target, inc, prefix } => {
                let op = if *inc { "++" } else { "--" };
                if *prefix {
                    format!("{op}{}", self.lvalue(target))
                } else {
                    format!("{}{op}", self.lvalue(target))
                }
            }
            IExpr::Cast(t, x) => format!("({}) {}", t.c_name(), self.wrap(x, P_UNARY)),
            IExpr::IsBad { access, negate } => {
                let pname = &p.params[access.param];
                let t = format!("PDL_ISBAD({}, __bad_{pname})", self.access(access));
                if *negate { format!("!{t}") } else { t }
            }
            IExpr::IsBadVar { local, param, negate } => {
                let t = format!("PDL_ISBAD({}, __bad_{})", p.locals[*local].name, p.params[*param]);
                if *negate { format!("!{t}") } else { t }
            }
            IExpr::SetBadVar { local, param } => {
                format!("({} = __bad_{})", p.locals[*local].name, p.params[*param])
            }
            IExpr::StateIsBad { param, negate } => {
                let t = format!("(__pdl_{}->state & PDL_BADVAL)", p.params[*param]);
                if *negate { format!("!{t}") } else { t }
            }
        }
    }
}
