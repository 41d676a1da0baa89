//! Name resolution and dim binding.

use super::ast::*;
use super::format;
use super::{Context, KernelError, Variant};
use crate::ndarray::{Dtype, Scalar};
use crate::sigparse::Signature;
use crate::typesys::{letter_of, param_dtype};

#[derive(Debug, Clone)]
pub struct ElabEnv<'a> {
    pub sig: &'a Signature,
    pub ctx: Context,
    pub generic: Dtype,
    pub variant: Variant,
    pub param_types: Vec<Dtype>,
    /// Names visible through `$COMP(...)`.
    pub comp: Vec<String>,
    /// Names visible as bare identifiers (other parameters inside MakeComp).
    pub bare: Vec<String>,
}

impl<'a> ElabEnv<'a> {
    pub fn new(sig: &'a Signature, ctx: Context, generic: Dtype, variant: Variant) -> ElabEnv<'a> {
        let param_types = sig.params.iter().map(|p| param_dtype(p, generic)).collect();
        ElabEnv { sig, ctx, generic, variant, param_types, comp: Vec::new(), bare: Vec::new() }
    }

    pub fn with_comp(mut self, names: Vec<String>) -> Self {
        self.comp = names;
        self
    }

    pub fn with_bare(mut self, names: Vec<String>) -> Self {
        self.bare = names;
        self
    }

    pub fn with_param_types(mut self, types: Vec<Dtype>) -> Self {
        self.param_types = types;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Local {
    pub name: String,
    pub ty: Dtype,
}

#[derive(Debug, Clone, PartialEq)]
pub enum IIndex {
    /// Index of the enclosing `loop(d)` over the same dim.
    Loop(usize),
    Expr(IExpr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IAccess {
    pub param: usize,
    /// One entry per active dim of the parameter, in signature order.
    pub idx: Vec<IIndex>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum IMeta {
    Ndims,
    Dims(Box<IExpr>),
    Dimincs(Box<IExpr>),
    Datatype,
    Nvals,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Lvalue {
    Local(usize),
    Access(IAccess),
    Size(usize),
    Comp(usize),
    CompIndex(usize, IExpr),
    Meta(usize, IMeta),
}

#[derive(Debug, Clone, PartialEq)]
pub enum IExpr {
    Const(Scalar),
    Local(usize),
    LoopIndex(usize),
    Access(Box<IAccess>),
    Size(usize),
    Comp(usize),
    CompIndex(usize, Box<IExpr>),
    Bare(usize),
    BareIndex(usize, Box<IExpr>),
    Meta(usize, IMeta),
    Call(Builtin, Vec<IExpr>),
    Neg(Box<IExpr>),
    Not(Box<IExpr>),
    Binary(BinOp, Box<IExpr>, Box<IExpr>),
    Ternary(Box<IExpr>, Box<IExpr>, Box<IExpr>),
    Assign(Box<Lvalue>, Option<BinOp>, Box<IExpr>),
    IncDec { target: Box<Lvalue>, inc: bool, prefix: bool },
    Cast(Dtype, Box<IExpr>),
    /// `$ISBAD` (negate = false) or `$ISGOOD` (negate = true); bad variant only.
    IsBad { access: Box<IAccess>, negate: bool },
    IsBadVar { local: usize, param: usize, negate: bool },
    SetBadVar { local: usize, param: usize },
    StateIsBad { param: usize, negate: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub enum IStmt {
    Declare(usize, Option<IExpr>),
    Eval(IExpr),
    If(IExpr, Vec<IStmt>, Vec<IStmt>),
    For(Vec<IStmt>, Option<IExpr>, Vec<IStmt>, Vec<IStmt>),
    While(IExpr, Vec<IStmt>),
    Block(Vec<IStmt>),
    /// Statements sharing the enclosing scope (multi-name declarations).
    Seq(Vec<IStmt>),
    Loop(usize, Vec<IStmt>),
    ThreadLoop(Vec<IStmt>),
    Break,
    Continue,
    SetBad(IAccess),
    StateSet { param: usize, bad: bool },
    SetNdims(IExpr),
    SetDims,
    EquivCp(IExpr, IExpr, Option<IExpr>),
}

/// An elaborated kernel body.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub stmts: Vec<IStmt>,
    pub locals: Vec<Local>,
    pub has_threadloop: bool,
    /// Dim keys of the signature; `IExpr::Size` and loops index into this.
    pub dims: Vec<String>,
    pub params: Vec<String>,
    pub param_types: Vec<Dtype>,
    pub param_dims: Vec<Vec<String>>,
    pub param_is_temp: Vec<bool>,
    pub comp: Vec<String>,
    pub bare: Vec<String>,
    pub generic: Dtype,
    pub variant: Variant,
    pub ctx: Context,
}

impl Program {
    pub fn dim_index(&self, key: &str) -> Option<usize> {
        self.dims.iter().position(|d| d == key)
    }
}

struct Elab<'e, 'a> {
    env: &'e ElabEnv<'a>,
    dims: Vec<String>,
    locals: Vec<Local>,
    scopes: Vec<Vec<(String, usize)>>,
    loops: Vec<usize>,
    threadloops: usize,
}

pub fn elaborate(ast: &KernelAst, env: &ElabEnv) -> Result<Program, KernelError> {
    let mut e = Elab {
        env,
        dims: env.sig.dim_names.iter().cloned().collect(),
        locals: Vec::new(),
        scopes: vec![Vec::new()],
        loops: Vec::new(),
        threadloops: 0,
    };
    let mut stmts = Vec::with_capacity(ast.stmts.len());
    for s in &ast.stmts {
        if let Stmt::ThreadLoop(body) = s {
            if e.threadloops > 0 {
                return Err(KernelError::ThreadLoopPlacement);
            }
            if env.ctx != Context::Calc {
                return Err(e.loop_unavailable());
            }
            e.threadloops += 1;
            let body = e.block(body)?;
            stmts.push(IStmt::ThreadLoop(body));
        } else {
            stmts.push(e.stmt(s)?);
        }
    }
    Ok(Program {
        stmts,
        locals: e.locals,
        has_threadloop: e.threadloops > 0,
        dims: e.dims,
        params: env.sig.params.iter().map(|p| p.name.clone()).collect(),
        param_dims: env.sig.params.iter().map(|p| p.dim_keys()).collect(),
        param_is_temp: env.sig.params.iter().map(|p| p.is_temp()).collect(),
        param_types: env.param_types.clone(),
        comp: env.comp.clone(),
        bare: env.bare.clone(),
        generic: env.generic,
        variant: env.variant,
        ctx: env.ctx,
    })
}

fn generic_letter_matches(letter: char, generic: Dtype) -> bool {
    let l = letter_of(generic);
    letter == l || (generic == Dtype::Indx && letter == 'I')
}

impl<'e, 'a> Elab<'e, 'a> {
    fn ctx(&self) -> Context {
        self.env.ctx
    }

    fn unavailable(&self, what: impl Into<String>) -> KernelError {
        KernelError::NotAvailable { what: what.into(), context: self.ctx() }
    }

    fn loop_unavailable(&self) -> KernelError {
        match self.ctx() {
            Context::RedoDims | Context::FlowRedoDims => KernelError::LoopInRedoDims(self.ctx()),
            c => KernelError::NotAvailable { what: "loop/threadloop".into(), context: c },
        }
    }

    fn param(&self, name: &str) -> Result<usize, KernelError> {
        self.env.sig.index_of(name).ok_or_else(|| KernelError::UnknownParam(name.to_string()))
    }

    fn dim(&self, name: &str) -> Result<usize, KernelError> {
        self.dims
            .iter()
            .position(|d| d == name)
            .ok_or_else(|| KernelError::UnknownDim { param: None, dim: name.to_string() })
    }

    fn type_spec(&self, t: &TypeSpec) -> Result<Dtype, KernelError> {
        match t {
            TypeSpec::Named(d) => Ok(*d),
            TypeSpec::Generic => Ok(self.env.generic),
            TypeSpec::Switch(letters, types) => {
                let i = self.switch_pick(letters)?;
                Ok(types[i])
            }
        }
    }

    fn switch_pick(&self, letters: &[char]) -> Result<usize, KernelError> {
        letters
            .iter()
            .position(|&c| generic_letter_matches(c, self.env.generic))
            .ok_or_else(|| KernelError::TypeSwitchMissingLetter {
                letters: letters.iter().collect(),
                letter: letter_of(self.env.generic),
            })
    }

    fn declare(&mut self, name: &str, ty: Dtype) -> Result<usize, KernelError> {
        let scope = self.scopes.last_mut().expect("scope");
        if scope.iter().any(|(n, _)| n == name) {
            return Err(KernelError::DuplicateDeclaration(name.to_string()));
        }
        let slot = self.locals.len();
        self.locals.push(Local { name: name.to_string(), ty });
        self.scopes.last_mut().expect("scope").push((name.to_string(), slot));
        Ok(slot)
    }

    fn lookup_local(&self, name: &str) -> Option<usize> {
        self.scopes.iter().rev().flat_map(|s| s.iter().rev()).find(|(n, _)| n == name).map(|(_, i)| *i)
    }

    fn block(&mut self, body: &[Stmt]) -> Result<Vec<IStmt>, KernelError> {
        self.scopes.push(Vec::new());
        let r = body.iter().map(|s| self.stmt(s)).collect();
        self.scopes.pop();
        r
    }

    fn sub(&mut self, s: &Stmt) -> Result<Vec<IStmt>, KernelError> {
        match s {
            Stmt::Block(b) => self.block(b),
            s => self.block(std::slice::from_ref(s)),
        }
    }

    fn stmt(&mut self, s: &Stmt) -> Result<IStmt, KernelError> {
        Ok(match s {
            Stmt::Declare(t, decls) => {
                let ty = self.type_spec(t)?;
                let mut out = Vec::new();
                for d in decls {
                    let init = d.init.as_ref().map(|e| self.expr(e)).transpose()?;
                    let slot = self.declare(&d.name, ty)?;
                    out.push(IStmt::Declare(slot, init));
                }
                if out.len() == 1 {
                    out.pop().expect("one")
                } else {
                    IStmt::Seq(out)
                }
            }
            Stmt::Assign(l, op, r) => {
                IStmt::Eval(self.expr(&Expr::Assign(Box::new(l.clone()), *op, Box::new(r.clone())))?)
            }
            Stmt::If(c, t, e) => {
                let c = self.expr(c)?;
                let t = self.sub(t)?;
                let e = match e {
                    Some(e) => self.sub(e)?,
                    None => Vec::new(),
                };
                IStmt::If(c, t, e)
            }
            Stmt::For(init, cond, step, body) => {
                self.scopes.push(Vec::new());
                let r = (|| {
                    let init = match init {
                        Some(s) => vec![self.stmt(s)?],
                        None => Vec::new(),
                    };
                    let cond = cond.as_ref().map(|c| self.expr(c)).transpose()?;
                    let step = match step {
                        Some(s) => vec![self.stmt(s)?],
                        None => Vec::new(),
                    };
                    let body = self.sub(body)?;
                    Ok(IStmt::For(init, cond, step, body))
                })();
                self.scopes.pop();
                r?
            }
            Stmt::While(c, body) => {
                let c = self.expr(c)?;
                IStmt::While(c, self.sub(body)?)
            }
            Stmt::Block(b) => IStmt::Block(self.block(b)?),
            Stmt::LoopOver(d, body) => {
                if self.ctx() != Context::Calc {
                    return Err(self.loop_unavailable());
                }
                let di = self.dim(d)?;
                self.loops.push(di);
                let r = self.block(body);
                self.loops.pop();
                IStmt::Loop(di, r?)
            }
            Stmt::ThreadLoop(_) => {
                if self.ctx() != Context::Calc {
                    return Err(self.loop_unavailable());
                }
                return Err(KernelError::ThreadLoopPlacement);
            }
            Stmt::Expr(e) => IStmt::Eval(self.expr(e)?),
            Stmt::Break => IStmt::Break,
            Stmt::Continue => IStmt::Continue,
            Stmt::Empty | Stmt::DoCompDims => IStmt::Seq(Vec::new()),
            Stmt::SetBad(a) => IStmt::SetBad(self.access(a)?),
            Stmt::StateSetBad(p) | Stmt::StateSetGood(p) => {
                if self.ctx() != Context::Calc {
                    return Err(self.unavailable("$PDLSTATESETBAD/$PDLSTATESETGOOD"));
                }
                IStmt::StateSet { param: self.param(p)?, bad: matches!(s, Stmt::StateSetBad(_)) }
            }
            Stmt::SetNdims(e) => {
                if self.ctx() != Context::FlowRedoDims {
                    return Err(self.unavailable("$SETNDIMS"));
                }
                IStmt::SetNdims(self.expr(e)?)
            }
            Stmt::SetDims => {
                if self.ctx() != Context::FlowRedoDims {
                    return Err(self.unavailable("$SETDIMS"));
                }
                IStmt::SetDims
            }
            Stmt::EquivCpOffs(a, b) | Stmt::EquivCpTrunc(a, b, _) => {
                if self.ctx() != Context::EquivCpOffs {
                    return Err(self.unavailable("$EquivCPOffs"));
                }
                let oob = match s {
                    Stmt::EquivCpTrunc(_, _, c) => Some(self.expr(c)?),
                    _ => None,
                };
                IStmt::EquivCp(self.expr(a)?, self.expr(b)?, oob)
            }
        })
    }

    fn access(&mut self, a: &Access) -> Result<IAccess, KernelError> {
        let pi = self.param(&a.param)?;
        if self.ctx() != Context::Calc {
            return Err(KernelError::ElementAccessInRedoDims { param: a.param.clone(), context: self.ctx() });
        }
        let spec = &self.env.sig.params[pi];
        let keys = spec.dim_keys();
        let mut bound: Vec<Option<IExpr>> = vec![None; keys.len()];
        for (d, e) in &a.bindings {
            let Some(k) = keys.iter().position(|x| x == d) else {
                return Err(KernelError::UnknownDim { param: Some(a.param.clone()), dim: d.clone() });
            };
            if bound[k].is_some() {
                return Err(KernelError::DuplicateBinding { param: a.param.clone(), dim: d.clone() });
            }
            bound[k] = Some(self.expr(e)?);
        }
        let mut idx = Vec::with_capacity(keys.len());
        for (k, b) in bound.into_iter().enumerate() {
            match b {
                Some(e) => idx.push(IIndex::Expr(e)),
                None => {
                    let di = self.dim(&keys[k])?;
                    if !self.loops.contains(&di) {
                        return Err(KernelError::UnboundDim { param: a.param.clone(), dim: keys[k].clone() });
                    }
                    idx.push(IIndex::Loop(di));
                }
            }
        }
        Ok(IAccess { param: pi, idx })
    }

    fn comp_index(&self, name: &str) -> Result<usize, KernelError> {
        self.env.comp.iter().position(|c| c == name).ok_or_else(|| KernelError::UnknownCompField(name.to_string()))
    }

    fn meta(&mut self, param: &str, field: &MetaField) -> Result<(usize, IMeta), KernelError> {
        let pi = self.param(param)?;
        let m = match field {
            MetaField::Ndims => IMeta::Ndims,
            MetaField::Datatype => IMeta::Datatype,
            MetaField::Nvals => IMeta::Nvals,
            MetaField::Dims(i) => IMeta::Dims(Box::new(self.expr(i)?)),
            MetaField::Dimincs(i) => IMeta::Dimincs(Box::new(self.expr(i)?)),
        };
        Ok((pi, m))
    }

    fn lvalue(&mut self, e: &Expr) -> Result<Lvalue, KernelError> {
        Ok(match e {
            Expr::Ident(name) => match self.lookup_local(name) {
                Some(slot) => Lvalue::Local(slot),
                None => return Err(KernelError::InvalidLvalue(name.clone())),
            },
            Expr::Access(a) => Lvalue::Access(self.access(a)?),
            Expr::Size(d) => {
                let di = self.dim(d)?;
                if self.ctx() != Context::RedoDims {
                    return Err(self.unavailable(format!("assignment to $SIZE({d})")));
                }
                Lvalue::Size(di)
            }
            Expr::Comp(c) => {
                let ci = self.comp_index(c)?;
                if self.ctx() != Context::MakeComp {
                    return Err(self.unavailable(format!("assignment to $COMP({c})")));
                }
                Lvalue::Comp(ci)
            }
            Expr::Index(b, i) => match &**b {
                Expr::Comp(c) => {
                    let ci = self.comp_index(c)?;
                    if self.ctx() != Context::MakeComp {
                        return Err(self.unavailable(format!("assignment to $COMP({c})")));
                    }
                    Lvalue::CompIndex(ci, self.expr(i)?)
                }
                _ => return Err(KernelError::InvalidLvalue(format::expr(e))),
            },
            Expr::Meta { param, field, .. } => {
                if self.ctx() != Context::FlowRedoDims || param != "CHILD" {
                    return Err(self.unavailable(format!("assignment to {}", format::expr(e))));
                }
                if matches!(field, MetaField::Ndims | MetaField::Nvals) {
                    return Err(KernelError::InvalidLvalue(format::expr(e)));
                }
                let (pi, m) = self.meta(param, field)?;
                Lvalue::Meta(pi, m)
            }
            _ => return Err(KernelError::InvalidLvalue(format::expr(e))),
        })
    }

    fn bad_macro_check(&self, what: &str) -> Result<(), KernelError> {
        if self.ctx() != Context::Calc {
            return Err(self.unavailable(what));
        }
        Ok(())
    }

    fn expr(&mut self, e: &Expr) -> Result<IExpr, KernelError> {
        Ok(match e {
            Expr::Int(i) => IExpr::Const(Scalar::Int(*i)),
            Expr::Float(f) => IExpr::Const(Scalar::Float(*f)),
            Expr::Nan => IExpr::Const(Scalar::Float(f64::NAN)),
            Expr::Infinity => IExpr::Const(Scalar::Float(f64::INFINITY)),
            Expr::Ident(name) => {
                if let Some(slot) = self.lookup_local(name) {
                    IExpr::Local(slot)
                } else if let Some(di) = self.loops.iter().rev().copied().find(|&d| self.dims[d] == *name) {
                    IExpr::LoopIndex(di)
                } else if let Some(bi) = self.env.bare.iter().position(|b| b == name) {
                    IExpr::Bare(bi)
                } else {
                    return Err(KernelError::UnknownIdentifier(name.clone()));
                }
            }
            Expr::Access(a) => IExpr::Access(Box::new(self.access(a)?)),
            Expr::Size(d) => {
                let di = self.dim(d)?;
                match self.ctx() {
                    Context::Calc => IExpr::Size(di),
                    Context::RedoDims => return Err(KernelError::SizeReadInRedoDims(d.clone())),
                    _ => return Err(self.unavailable(format!("$SIZE({d})"))),
                }
            }
            Expr::Comp(c) => IExpr::Comp(self.comp_index(c)?),
            Expr::Index(b, i) => match &**b {
                Expr::Comp(c) => {
                    let ci = self.comp_index(c)?;
                    IExpr::CompIndex(ci, Box::new(self.expr(i)?))
                }
                Expr::Ident(name) if self.env.bare.contains(name) && self.lookup_local(name).is_none() => {
                    let bi = self.env.bare.iter().position(|x| x == name).expect("present");
                    IExpr::BareIndex(bi, Box::new(self.expr(i)?))
                }
                other => {
                    return Err(KernelError::syntax(0, format!("cannot index into {}", format::expr(other))))
                }
            },
            Expr::Meta { param, field, .. } => {
                let (pi, m) = self.meta(param, field)?;
                IExpr::Meta(pi, m)
            }
            Expr::TypeSwitch(letters, alts) => {
                let i = self.switch_pick(letters)?;
                match &alts[i] {
                    SwitchAlt::Expr(e) => self.expr(e)?,
                    SwitchAlt::Type(_) => return Err(KernelError::TypeAsValue),
                }
            }
            Expr::Call(b, args) => {
                IExpr::Call(*b, args.iter().map(|a| self.expr(a)).collect::<Result<_, _>>()?)
            }
            Expr::Unary(UnOp::Neg, x) => IExpr::Neg(Box::new(self.expr(x)?)),
            Expr::Unary(UnOp::Not, x) => IExpr::Not(Box::new(self.expr(x)?)),
            Expr::IncDec { target, inc, prefix } => {
                IExpr::IncDec { target: Box::new(self.lvalue(target)?), inc: *inc, prefix: *prefix }
            }
            Expr::Binary(op, a, b) => IExpr::Binary(*op, Box::new(self.expr(a)?), Box::new(self.expr(b)?)),
            Expr::Ternary(c, a, b) => {
                IExpr::Ternary(Box::new(self.expr(c)?), Box::new(self.expr(a)?), Box::new(self.expr(b)?))
            }
            Expr::Assign(l, op, r) => {
                let rhs = self.expr(r)?;
                let lv = self.lvalue(l)?;
                IExpr::Assign(Box::new(lv), op.binop(), Box::new(rhs))
            }
            Expr::Cast(t, x) => IExpr::Cast(self.type_spec(t)?, Box::new(self.expr(x)?)),
            Expr::IsBad(a) | Expr::IsGood(a) => {
                self.bad_macro_check("$ISBAD/$ISGOOD")?;
                let acc = self.access(a)?;
                let negate = matches!(e, Expr::IsGood(_));
                match self.env.variant {
                    Variant::Bad => IExpr::IsBad { access: Box::new(acc), negate },
                    Variant::Good => IExpr::Const(Scalar::Int(negate as i64)),
                }
            }
            Expr::IsBadVar(v, p) | Expr::IsGoodVar(v, p) => {
                self.bad_macro_check("$ISBADVAR/$ISGOODVAR")?;
                let local = self.lookup_local(v).ok_or_else(|| KernelError::UnknownIdentifier(v.clone()))?;
                let param = self.param(p)?;
                let negate = matches!(e, Expr::IsGoodVar(..));
                match self.env.variant {
                    Variant::Bad => IExpr::IsBadVar { local, param, negate },
                    Variant::Good => IExpr::Const(Scalar::Int(negate as i64)),
                }
            }
            Expr::SetBadVar(v, p) => {
                self.bad_macro_check("$SETBADVAR")?;
                let local = self.lookup_local(v).ok_or_else(|| KernelError::UnknownIdentifier(v.clone()))?;
                IExpr::SetBadVar { local, param: self.param(p)? }
            }
            Expr::StateIsBad(p) | Expr::StateIsGood(p) => {
                self.bad_macro_check("$PDLSTATEISBAD/$PDLSTATEISGOOD")?;
                IExpr::StateIsBad { param: self.param(p)?, negate: matches!(e, Expr::StateIsGood(_)) }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernelc::parse_kernel;
    use crate::sigparse::parse_signature;

    fn elab(sig: &str, body: &str, ctx: Context) -> Result<Program, KernelError> {
        let s = parse_signature(sig).unwrap();
        let env = ElabEnv::new(&s, ctx, Dtype::Double, Variant::Bad).with_comp(vec!["max_it".into()]);
        elaborate(&parse_kernel(body)?, &env)
    }

    #[test]
    fn linscale_accesses() {
        let p = elab("a(); b(); c(); [o]o()", "$o() = $a() * $b() + $c();", Context::Calc).unwrap();
        assert_eq!(p.stmts.len(), 1);
        let IStmt::Eval(IExpr::Assign(lv, None, _)) = &p.stmts[0] else { panic!() };
        assert!(matches!(**lv, Lvalue::Access(IAccess { param: 3, .. })));
    }

    #[test]
    fn loop_capture() {
        let p = elab("vec(n); [o]len()", "double acc = 0; loop(n) %{ acc += $vec()*$vec(); %} $len() = sqrt(acc);", Context::Calc)
            .unwrap();
        let IStmt::Loop(0, body) = &p.stmts[1] else { panic!("{:?}", p.stmts[1]) };
        let IStmt::Eval(IExpr::Assign(_, Some(BinOp::Add), rhs)) = &body[0] else { panic!() };
        let IExpr::Binary(_, a, _) = &**rhs else { panic!() };
        assert!(matches!(&**a, IExpr::Access(acc) if acc.idx == vec![IIndex::Loop(0)]));
    }

    #[test]
    fn binding_errors() {
        assert!(matches!(
            elab("a(); [o]b()", "$b() = $a(n=>2);", Context::Calc),
            Err(KernelError::UnknownDim { .. })
        ));
        assert!(matches!(elab("a(n); [o]b()", "$b() = $a();", Context::Calc), Err(KernelError::UnboundDim { .. })));
        assert!(matches!(elab("a(); [o]b()", "$b() = $q();", Context::Calc), Err(KernelError::UnknownParam(_))));
        assert!(matches!(elab("a(); [o]b()", "$b() = $COMP(zz);", Context::Calc), Err(KernelError::UnknownCompField(_))));
        assert!(matches!(elab("a(); [o]b()", "$b() = zz;", Context::Calc), Err(KernelError::UnknownIdentifier(_))));
        assert!(matches!(
            elab("a(n); [o]b()", "$b() = $a(n=>0, n=>1);", Context::Calc),
            Err(KernelError::DuplicateBinding { .. })
        ));
    }

    #[test]
    fn dynamic_binding() {
        let p = elab("src(n); indx dex(); [o]out()", "$out() = $src(n => $dex());", Context::Calc).unwrap();
        let IStmt::Eval(IExpr::Assign(_, _, rhs)) = &p.stmts[0] else { panic!() };
        let IExpr::Access(a) = &**rhs else { panic!() };
        assert!(matches!(&a.idx[0], IIndex::Expr(IExpr::Access(_))));
        assert_eq!(p.param_types[1], Dtype::Indx);
    }

    #[test]
    fn redodims_restrictions() {
        let sig = "in(n); [o]out(m)";
        assert!(elab(sig, "$SIZE(m) = $PDL(in)->dims(0) - 1;", Context::RedoDims).is_ok());
        assert!(matches!(elab(sig, "$SIZE(m) = $SIZE(n);", Context::RedoDims), Err(KernelError::SizeReadInRedoDims(_))));
        assert!(matches!(
            elab(sig, "$SIZE(m) = $in(n=>0);", Context::RedoDims),
            Err(KernelError::ElementAccessInRedoDims { .. })
        ));
        assert!(matches!(elab(sig, "loop(n) %{ %}", Context::RedoDims), Err(KernelError::LoopInRedoDims(_))));
        assert!(matches!(elab(sig, "$SIZE(m) = 1;", Context::Calc), Err(KernelError::NotAvailable { .. })));
    }

    #[test]
    fn threadloop_placement() {
        let sig = "a(); [o]b()";
        let p = elab(sig, "int k = 0; threadloop %{ $b() = k; %}", Context::Calc).unwrap();
        assert!(p.has_threadloop);
        assert_eq!(
            elab(sig, "threadloop %{ %} threadloop %{ %}", Context::Calc),
            Err(KernelError::ThreadLoopPlacement)
        );
        assert_eq!(elab(sig, "if (1) { threadloop %{ %} }", Context::Calc), Err(KernelError::ThreadLoopPlacement));
    }

    #[test]
    fn type_switch_pick() {
        let s = parse_signature("a(); [o]b()").unwrap();
        let k = parse_kernel("$b() = ($TSLFD(short,long,float,double)) $a();").unwrap();
        let env = ElabEnv::new(&s, Context::Calc, Dtype::Float, Variant::Good);
        let p = elaborate(&k, &env).unwrap();
        let IStmt::Eval(IExpr::Assign(_, _, rhs)) = &p.stmts[0] else { panic!() };
        assert!(matches!(&**rhs, IExpr::Cast(Dtype::Float, _)));
        let env = ElabEnv::new(&s, Context::Calc, Dtype::Byte, Variant::Good);
        assert!(matches!(elaborate(&k, &env), Err(KernelError::TypeSwitchMissingLetter { letter: 'B', .. })));
    }

    #[test]
    fn good_variant_folds_isbad() {
        let s = parse_signature("in(); [o]out()").unwrap();
        let k = parse_kernel("if ($ISBAD(in())) $SETBAD(out());").unwrap();
        let p = elaborate(&k, &ElabEnv::new(&s, Context::Calc, Dtype::Double, Variant::Good)).unwrap();
        let IStmt::If(c, _, _) = &p.stmts[0] else { panic!() };
        assert_eq!(*c, IExpr::Const(Scalar::Int(0)));
    }
}
