use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::KernelError;
use crate::ndarray::Dtype;
use crate::typesys::dtype_of_letter;

/// Type names accepted in declarations and casts.
pub fn type_from_name(name: &str) -> Option<Dtype> {
    Dtype::from_name(name).or(match name {
        "long" => Some(Dtype::Int),
        "PDL_Indx" => Some(Dtype::Indx),
        _ => None,
    })
}

/// `$T` switch letters, if `name` is `T` followed only by type letters.
fn switch_letters(name: &str) -> Option<Vec<char>> {
    let rest = name.strip_prefix('T')?;
    if rest.is_empty() {
        return None;
    }
    rest.chars().map(|c| dtype_of_letter(c).ok().map(|_| c)).collect()
}

const META_FIELDS: [&str; 5] = ["ndims", "dims", "dimincs", "datatype", "nvals"];

pub struct Parser {
    toks: Vec<Token>,
    i: usize,
}

pub fn parse_kernel(text: &str) -> Result<KernelAst, KernelError> {
    let mut p = Parser { toks: tokenize(text)?, i: 0 };
    let mut stmts = Vec::new();
    while p.peek() != &Tok::Eof {
        stmts.push(p.stmt()?);
    }
    Ok(KernelAst { stmts })
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.i].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let j = (self.i + k).min(self.toks.len() - 1);
        &self.toks[j].tok
    }

    fn pos(&self) -> usize {
        self.toks[self.i].pos
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.i].tok.clone();
        if self.i < self.toks.len() - 1 {
            self.i += 1;
        }
        t
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn eat(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, KernelError> {
        Err(KernelError::syntax(self.pos(), msg))
    }

    fn expect(&mut self, p: &str) -> Result<(), KernelError> {
        if self.eat(p) {
            Ok(())
        } else {
            self.err(format!("expected '{p}', found {}", describe(self.peek())))
        }
    }

    fn ident(&mut self) -> Result<String, KernelError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            t => self.err(format!("expected identifier, found {}", describe(&t))),
        }
    }

    fn block_until(&mut self, close: &str) -> Result<Vec<Stmt>, KernelError> {
        let mut v = Vec::new();
        while !self.eat(close) {
            if self.peek() == &Tok::Eof {
                return self.err(format!("expected '{close}' before end of kernel"));
            }
            v.push(self.stmt()?);
        }
        Ok(v)
    }

    /// Looks ahead for a declaration: a type spec followed by an identifier.
    fn try_type_spec(&mut self) -> Result<Option<TypeSpec>, KernelError> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                if let Some(t) = type_from_name(&name) {
                    if matches!(self.peek_at(1), Tok::Ident(_)) {
                        self.bump();
                        return Ok(Some(TypeSpec::Named(t)));
                    }
                }
                Ok(None)
            }
            Tok::Dollar(name) if name == "GENERIC" => {
                if matches!(self.peek_at(1), Tok::Punct("("))
                    && matches!(self.peek_at(2), Tok::Punct(")"))
                    && matches!(self.peek_at(3), Tok::Ident(_))
                {
                    self.i += 3;
                    return Ok(Some(TypeSpec::Generic));
                }
                Ok(None)
            }
            Tok::Dollar(name) if switch_letters(&name).is_some() => {
                let save = self.i;
                let Expr::TypeSwitch(letters, alts) = self.primary()? else {
                    unreachable!("switch name parses to a switch")
                };
                if matches!(self.peek(), Tok::Ident(_)) {
                    if let Some(types) = switch_types(&alts) {
                        return Ok(Some(TypeSpec::Switch(letters, types)));
                    }
                }
                self.i = save;
                Ok(None)
            }
            _ => Ok(None),
        }
    }

    fn declaration(&mut self, ty: TypeSpec) -> Result<Stmt, KernelError> {
        let mut decls = Vec::new();
        loop {
            let name = self.ident()?;
            let init = if self.eat("=") { Some(self.assign_expr()?) } else { None };
            decls.push(Declarator { name, init });
            if !self.eat(",") {
                break;
            }
        }
        Ok(Stmt::Declare(ty, decls))
    }

    /// A declaration or expression without the trailing `;` (for headers).
    fn simple_stmt(&mut self) -> Result<Stmt, KernelError> {
        if let Some(ty) = self.try_type_spec()? {
            return self.declaration(ty);
        }
        let e = self.expr()?;
        Ok(match e {
            Expr::Assign(l, op, r) => Stmt::Assign(*l, op, *r),
            e => Stmt::Expr(e),
        })
    }

    fn paren_param(&mut self) -> Result<String, KernelError> {
        self.expect("(")?;
        let name = self.ident()?;
        if self.eat("(") {
            self.expect(")")?;
        }
        self.expect(")")?;
        Ok(name)
    }

    fn stmt(&mut self) -> Result<Stmt, KernelError> {
        match self.peek().clone() {
            Tok::Punct(";") => {
                self.bump();
                Ok(Stmt::Empty)
            }
            Tok::Punct("{") => {
                self.bump();
                Ok(Stmt::Block(self.block_until("}")?))
            }
            Tok::Ident(kw) => match kw.as_str() {
                "if" => {
                    self.bump();
                    self.expect("(")?;
                    let c = self.expr()?;
                    self.expect(")")?;
                    let then = Box::new(self.stmt()?);
                    let els = if matches!(self.peek(), Tok::Ident(s) if s == "else") {
                        self.bump();
                        Some(Box::new(self.stmt()?))
                    } else {
                        None
                    };
                    Ok(Stmt::If(c, then, els))
                }
                "for" => {
                    self.bump();
                    self.expect("(")?;
                    let init = if self.is_punct(";") { None } else { Some(Box::new(self.simple_stmt()?)) };
                    self.expect(";")?;
                    let cond = if self.is_punct(";") { None } else { Some(self.expr()?) };
                    self.expect(";")?;
                    let step = if self.is_punct(")") { None } else { Some(Box::new(self.simple_stmt()?)) };
                    self.expect(")")?;
                    let body = Box::new(self.stmt()?);
                    Ok(Stmt::For(init, cond, step, body))
                }
                "while" => {
                    self.bump();
                    self.expect("(")?;
                    let c = self.expr()?;
                    self.expect(")")?;
                    Ok(Stmt::While(c, Box::new(self.stmt()?)))
                }
                "loop" if matches!(self.peek_at(1), Tok::Punct("(")) => {
                    self.bump();
                    self.expect("(")?;
                    let dim = self.ident()?;
                    self.expect(")")?;
                    self.expect("%{")?;
                    Ok(Stmt::LoopOver(dim, self.block_until("%}")?))
                }
                "threadloop" if matches!(self.peek_at(1), Tok::Punct("%{")) => {
                    self.bump();
                    self.bump();
                    Ok(Stmt::ThreadLoop(self.block_until("%}")?))
                }
                "break" => {
                    self.bump();
                    self.expect(";")?;
                    Ok(Stmt::Break)
                }
                "continue" => {
                    self.bump();
                    self.expect(";")?;
                    Ok(Stmt::Continue)
                }
                _ => self.terminated_simple(),
            },
            Tok::Dollar(name) => {
                let s = match name.as_str() {
                    "SETBAD" => {
                        self.bump();
                        self.expect("(")?;
                        let a = self.bad_access()?;
                        self.expect(")")?;
                        Stmt::SetBad(a)
                    }
                    "PDLSTATESETBAD" => {
                        self.bump();
                        Stmt::StateSetBad(self.paren_param()?)
                    }
                    "PDLSTATESETGOOD" => {
                        self.bump();
                        Stmt::StateSetGood(self.paren_param()?)
                    }
                    "SETNDIMS" => {
                        self.bump();
                        self.expect("(")?;
                        let e = self.expr()?;
                        self.expect(")")?;
                        Stmt::SetNdims(e)
                    }
                    "SETDIMS" => {
                        self.bump();
                        self.expect("(")?;
                        self.expect(")")?;
                        Stmt::SetDims
                    }
                    "DOCOMPDIMS" => {
                        self.bump();
                        self.expect("(")?;
                        self.expect(")")?;
                        Stmt::DoCompDims
                    }
                    "EquivCPOffs" | "EquivCPTrunc" => {
                        self.bump();
                        self.expect("(")?;
                        let a = self.assign_expr()?;
                        self.expect(",")?;
                        let b = self.assign_expr()?;
                        let s = if name == "EquivCPTrunc" {
                            self.expect(",")?;
                            let c = self.assign_expr()?;
                            Stmt::EquivCpTrunc(a, b, c)
                        } else {
                            Stmt::EquivCpOffs(a, b)
                        };
                        self.expect(")")?;
                        s
                    }
                    _ => return self.terminated_simple(),
                };
                self.expect(";")?;
                Ok(s)
            }
            _ => self.terminated_simple(),
        }
    }

    fn terminated_simple(&mut self) -> Result<Stmt, KernelError> {
        let s = self.simple_stmt()?;
        self.expect(";")?;
        Ok(s)
    }

    pub fn expr(&mut self) -> Result<Expr, KernelError> {
        self.assign_expr()
    }

    fn assign_expr(&mut self) -> Result<Expr, KernelError> {
        let lhs = self.ternary()?;
        let op = match self.peek() {
            Tok::Punct("=") => AssignOp::Set,
            Tok::Punct("+=") => AssignOp::Add,
            Tok::Punct("-=") => AssignOp::Sub,
            Tok::Punct("*=") => AssignOp::Mul,
            Tok::Punct("/=") => AssignOp::Div,
            _ => return Ok(lhs),
        };
        self.bump();
        let rhs = self.assign_expr()?;
        Ok(Expr::Assign(Box::new(lhs), op, Box::new(rhs)))
    }

    fn ternary(&mut self) -> Result<Expr, KernelError> {
        let c = self.binary(1)?;
        if self.eat("?") {
            let a = self.assign_expr()?;
            self.expect(":")?;
            let b = self.ternary()?;
            return Ok(Expr::Ternary(Box::new(c), Box::new(a), Box::new(b)));
        }
        Ok(c)
    }

    fn peek_binop(&self) -> Option<BinOp> {
        Some(match self.peek() {
            Tok::Punct("||") => BinOp::Or,
            Tok::Punct("&&") => BinOp::And,
            Tok::Punct("==") => BinOp::Eq,
            Tok::Punct("!=") => BinOp::Ne,
            Tok::Punct("<") => BinOp::Lt,
            Tok::Punct("<=") => BinOp::Le,
            Tok::Punct(">") => BinOp::Gt,
            Tok::Punct(">=") => BinOp::Ge,
            Tok::Punct("+") => BinOp::Add,
            Tok::Punct("-") => BinOp::Sub,
            Tok::Punct("*") => BinOp::Mul,
            Tok::Punct("/") => BinOp::Div,
            Tok::Punct("%") => BinOp::Mod,
            _ => return None,
        })
    }

    /// Left-associative binary operators at or above `min` precedence.
    fn binary(&mut self, min: u8) -> Result<Expr, KernelError> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.peek_binop() {
            let prec = op.precedence();
            if prec < min {
                break;
            }
            self.bump();
            let rhs = self.binary(prec + 1)?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, KernelError> {
        match self.peek().clone() {
            Tok::Punct("-") => {
                self.bump();
                let e = self.unary()?;
                Ok(match e {
                    Expr::Int(i) => Expr::Int(i.wrapping_neg()),
                    Expr::Float(f) => Expr::Float(-f),
                    e => Expr::Unary(UnOp::Neg, Box::new(e)),
                })
            }
            Tok::Punct("+") => {
                self.bump();
                self.unary()
            }
            Tok::Punct("!") => {
                self.bump();
                Ok(Expr::Unary(UnOp::Not, Box::new(self.unary()?)))
            }
            Tok::Punct(p @ ("++" | "--")) => {
                self.bump();
                let target = self.unary()?;
                Ok(Expr::IncDec { target: Box::new(target), inc: p == "++", prefix: true })
            }
            Tok::Punct("(") => {
                if let Some(ty) = self.try_cast_type()? {
                    let e = self.unary()?;
                    return Ok(Expr::Cast(ty, Box::new(e)));
                }
                self.power()
            }
            _ => self.power(),
        }
    }

    /// At `(`: consumes `(type)` and returns the type, or leaves input alone.
    fn try_cast_type(&mut self) -> Result<Option<TypeSpec>, KernelError> {
        let save = self.i;
        self.bump();
        let ty = match self.peek().clone() {
            Tok::Ident(name) => match type_from_name(&name) {
                Some(t) if matches!(self.peek_at(1), Tok::Punct(")")) => {
                    self.bump();
                    Some(TypeSpec::Named(t))
                }
                _ => None,
            },
            Tok::Dollar(name) if name == "GENERIC" => {
                if matches!(self.peek_at(1), Tok::Punct("("))
                    && matches!(self.peek_at(2), Tok::Punct(")"))
                    && matches!(self.peek_at(3), Tok::Punct(")"))
                {
                    self.i += 3;
                    Some(TypeSpec::Generic)
                } else {
                    None
                }
            }
            Tok::Dollar(name) if switch_letters(&name).is_some() => {
                match self.primary()? {
                    Expr::TypeSwitch(letters, alts) if self.is_punct(")") => {
                        switch_types(&alts).map(|types| TypeSpec::Switch(letters, types))
                    }
                    _ => None,
                }
            }
            _ => None,
        };
        match ty {
            Some(t) => {
                self.expect(")")?;
                Ok(Some(t))
            }
            None => {
                self.i = save;
                Ok(None)
            }
        }
    }

    fn power(&mut self) -> Result<Expr, KernelError> {
        let base = self.postfix()?;
        if self.eat("**") {
            let exp = self.unary()?;
            return Ok(Expr::Binary(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn postfix(&mut self) -> Result<Expr, KernelError> {
        let mut e = self.primary()?;
        loop {
            if self.eat("[") {
                let idx = self.expr()?;
                self.expect("]")?;
                e = Expr::Index(Box::new(e), Box::new(idx));
            } else if let Tok::Punct(p @ ("++" | "--")) = self.peek().clone() {
                self.bump();
                e = Expr::IncDec { target: Box::new(e), inc: p == "++", prefix: false };
            } else {
                return Ok(e);
            }
        }
    }

    /// `param(d=>e, ...)` with an optional leading `$`, as taken by the bad
    /// value macros.
    fn bad_access(&mut self) -> Result<Access, KernelError> {
        let name = match self.bump() {
            Tok::Ident(s) | Tok::Dollar(s) => s,
            t => return self.err(format!("expected a parameter access, found {}", describe(&t))),
        };
        self.access_args(name)
    }

    fn access_args(&mut self, param: String) -> Result<Access, KernelError> {
        self.expect("(")?;
        let mut bindings = Vec::new();
        if !self.eat(")") {
            loop {
                let d = self.ident()?;
                self.expect("=>")?;
                let e = self.assign_expr()?;
                bindings.push((d, e));
                if self.eat(")") {
                    break;
                }
                self.expect(",")?;
            }
        }
        Ok(Access { param, bindings })
    }

    fn meta_field(&mut self, bracket_index: bool) -> Result<MetaField, KernelError> {
        let f = self.ident()?;
        Ok(match f.as_str() {
            "ndims" => MetaField::Ndims,
            "datatype" => MetaField::Datatype,
            "nvals" => MetaField::Nvals,
            "dims" | "dimincs" => {
                let idx = if bracket_index {
                    self.expect("[")?;
                    let e = self.expr()?;
                    self.expect("]")?;
                    e
                } else if self.eat("(") {
                    let e = self.expr()?;
                    self.expect(")")?;
                    e
                } else {
                    self.expect("[")?;
                    let e = self.expr()?;
                    self.expect("]")?;
                    e
                };
                if f == "dims" {
                    MetaField::Dims(Box::new(idx))
                } else {
                    MetaField::Dimincs(Box::new(idx))
                }
            }
            other => return self.err(format!("unknown struct field '{other}'")),
        })
    }

    fn primary(&mut self) -> Result<Expr, KernelError> {
        let pos = self.pos();
        match self.bump() {
            Tok::Int(i) => Ok(Expr::Int(i)),
            Tok::Float(f) => Ok(Expr::Float(f)),
            Tok::Punct("(") => {
                let e = self.expr()?;
                self.expect(")")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if name == "NAN" {
                    return Ok(Expr::Nan);
                }
                if name == "INFINITY" {
                    return Ok(Expr::Infinity);
                }
                if self.is_punct("(") {
                    let Some(b) = Builtin::from_name(&name) else {
                        return Err(KernelError::UnknownBuiltin(name));
                    };
                    self.bump();
                    let mut args = Vec::new();
                    if !self.eat(")") {
                        loop {
                            args.push(self.assign_expr()?);
                            if self.eat(")") {
                                break;
                            }
                            self.expect(",")?;
                        }
                    }
                    if args.len() != b.arity() {
                        return Err(KernelError::BuiltinArity {
                            name: b.name().into(),
                            expected: b.arity(),
                            got: args.len(),
                        });
                    }
                    return Ok(Expr::Call(b, args));
                }
                Ok(Expr::Ident(name))
            }
            Tok::Dollar(name) => self.dollar(name, pos),
            t => Err(KernelError::syntax(pos, format!("unexpected {}", describe(&t)))),
        }
    }

    fn dollar(&mut self, name: String, pos: usize) -> Result<Expr, KernelError> {
        match name.as_str() {
            "SIZE" => {
                self.expect("(")?;
                let d = self.ident()?;
                self.expect(")")?;
                Ok(Expr::Size(d))
            }
            "COMP" => {
                self.expect("(")?;
                let d = self.ident()?;
                self.expect(")")?;
                Ok(Expr::Comp(d))
            }
            "GENERIC" => Err(KernelError::syntax(pos, "$GENERIC() is only valid as a type")),
            "PDL" => {
                let p = self.paren_param()?;
                self.expect("->")?;
                let style = if matches!(self.peek(), Tok::Ident(f) if f == "dims" || f == "dimincs")
                    && matches!(self.peek_at(1), Tok::Punct("["))
                {
                    MetaStyle::PdlBracket
                } else {
                    MetaStyle::Pdl
                };
                let field = self.meta_field(false)?;
                Ok(Expr::Meta { param: p, field, style })
            }
            "ISBAD" | "ISGOOD" => {
                self.expect("(")?;
                let a = self.bad_access()?;
                self.expect(")")?;
                Ok(if name == "ISBAD" { Expr::IsBad(a) } else { Expr::IsGood(a) })
            }
            "ISBADVAR" | "ISGOODVAR" | "SETBADVAR" => {
                self.expect("(")?;
                let v = self.ident()?;
                self.expect(",")?;
                let p = self.ident()?;
                self.expect(")")?;
                Ok(match name.as_str() {
                    "ISBADVAR" => Expr::IsBadVar(v, p),
                    "ISGOODVAR" => Expr::IsGoodVar(v, p),
                    _ => Expr::SetBadVar(v, p),
                })
            }
            "PDLSTATEISBAD" => Ok(Expr::StateIsBad(self.paren_param()?)),
            "PDLSTATEISGOOD" => Ok(Expr::StateIsGood(self.paren_param()?)),
            "SETBAD" | "PDLSTATESETBAD" | "PDLSTATESETGOOD" | "SETNDIMS" | "SETDIMS" | "EquivCPOffs"
            | "EquivCPTrunc" | "DOCOMPDIMS" => {
                Err(KernelError::syntax(pos, format!("${name} is a statement, not a value")))
            }
            _ => {
                if let Some(letters) = switch_letters(&name) {
                    return self.type_switch(letters);
                }
                // `$PARENT(ndims)` style struct access vs element access.
                if self.is_punct("(") {
                    if let Tok::Ident(f) = self.peek_at(1).clone() {
                        if META_FIELDS.contains(&f.as_str()) && !matches!(self.peek_at(2), Tok::Punct("=>")) {
                            self.bump();
                            let field = self.meta_field(true)?;
                            self.expect(")")?;
                            return Ok(Expr::Meta { param: name, field, style: MetaStyle::Inline });
                        }
                    }
                    return Ok(Expr::Access(self.access_args(name)?));
                }
                Ok(Expr::Access(Access { param: name, bindings: Vec::new() }))
            }
        }
    }

    fn type_switch(&mut self, letters: Vec<char>) -> Result<Expr, KernelError> {
        self.expect("(")?;
        let mut alts = Vec::new();
        loop {
            let alt = match self.peek().clone() {
                Tok::Ident(n)
                    if type_from_name(&n).is_some()
                        && matches!(self.peek_at(1), Tok::Punct(",") | Tok::Punct(")")) =>
                {
                    self.bump();
                    SwitchAlt::Type(type_from_name(&n).expect("checked"))
                }
                _ => SwitchAlt::Expr(self.assign_expr()?),
            };
            alts.push(alt);
            if self.eat(")") {
                break;
            }
            self.expect(",")?;
        }
        if alts.len() != letters.len() {
            return Err(KernelError::TypeSwitchArity {
                letters: letters.iter().collect(),
                got: alts.len(),
            });
        }
        Ok(Expr::TypeSwitch(letters, alts))
    }
}

fn switch_types(alts: &[SwitchAlt]) -> Option<Vec<Dtype>> {
    alts.iter()
        .map(|a| match a {
            SwitchAlt::Type(t) => Some(*t),
            SwitchAlt::Expr(_) => None,
        })
        .collect()
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("'{s}'"),
        Tok::Dollar(s) => format!("'${s}'"),
        Tok::Int(i) => format!("'{i}'"),
        Tok::Float(f) => format!("'{f}'"),
        Tok::Punct(p) => format!("'{p}'"),
        Tok::Eof => "end of kernel".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(text: &str) -> Stmt {
        let k = parse_kernel(text).unwrap();
        assert_eq!(k.stmts.len(), 1, "{k:?}");
        k.stmts.into_iter().next().unwrap()
    }

    fn acc(p: &str) -> Expr {
        Expr::Access(Access { param: p.into(), bindings: vec![] })
    }

    #[test]
    fn linscale() {
        let s = one("$o() = $a() * $b() + $c();");
        let rhs = Expr::Binary(
            BinOp::Add,
            Box::new(Expr::Binary(BinOp::Mul, Box::new(acc("a")), Box::new(acc("b")))),
            Box::new(acc("c")),
        );
        assert_eq!(s, Stmt::Assign(acc("o"), AssignOp::Set, rhs));
    }

    #[test]
    fn loop_over() {
        let s = one("loop(n) %{ acc += $vec()*$vec(); %}");
        let Stmt::LoopOver(d, body) = s else { panic!() };
        assert_eq!(d, "n");
        assert_eq!(body.len(), 1);
    }

    #[test]
    fn bindings_and_pow() {
        let s = one("$out() = $src(n => $dex());");
        let Stmt::Assign(_, _, Expr::Access(a)) = s else { panic!() };
        assert_eq!(a.bindings[0].0, "n");
        assert_eq!(a.bindings[0].1, acc("dex"));

        let Stmt::Expr(e) = one("-x ** 2;") else { panic!() };
        assert!(matches!(e, Expr::Unary(UnOp::Neg, ref b) if matches!(**b, Expr::Binary(BinOp::Pow, _, _))));
        let Stmt::Expr(e) = one("2 ** 3 ** 2;") else { panic!() };
        let Expr::Binary(BinOp::Pow, _, r) = e else { panic!() };
        assert!(matches!(*r, Expr::Binary(BinOp::Pow, _, _)));
    }

    #[test]
    fn declarations_and_casts() {
        let s = one("$GENERIC() rp0 = $c(n=>0), ip0 = $c(n=>1);");
        let Stmt::Declare(TypeSpec::Generic, d) = s else { panic!() };
        assert_eq!(d.len(), 2);
        assert!(matches!(one("long bc = 0;"), Stmt::Declare(TypeSpec::Named(Dtype::Int), _)));
        assert!(matches!(one("PDL_Indx k;"), Stmt::Declare(TypeSpec::Named(Dtype::Indx), _)));
        let Stmt::Assign(_, _, e) = one("a = ( $TSLFD( short, long, float, double ) ) b;") else { panic!() };
        assert!(matches!(e, Expr::Cast(TypeSpec::Switch(_, ref t), _) if t.len() == 4));
        let Stmt::Assign(_, _, e) = one("a = ($GENERIC()) b;") else { panic!() };
        assert!(matches!(e, Expr::Cast(TypeSpec::Generic, _)));
        let Stmt::Assign(_, _, e) = one("a = (b) + 1;") else { panic!() };
        assert!(matches!(e, Expr::Binary(BinOp::Add, _, _)));
    }

    #[test]
    fn chained_assignment_and_switch_values() {
        let s = one("$sols(s=>0) = $sols(s=>1) = $TFDS(NAN, NAN, -32768);");
        let Stmt::Assign(_, AssignOp::Set, Expr::Assign(_, _, sw)) = s else { panic!() };
        let Expr::TypeSwitch(l, alts) = *sw else { panic!() };
        assert_eq!(l, vec!['F', 'D', 'S']);
        assert_eq!(alts[2], SwitchAlt::Expr(Expr::Int(-32768)));
    }

    #[test]
    fn bad_macros() {
        let Stmt::If(c, _, _) = one("if ($ISBAD(in(n=>2))) bc++;") else { panic!() };
        assert!(matches!(c, Expr::IsBad(ref a) if a.param == "in" && a.bindings.len() == 1));
        assert_eq!(one("$SETBAD(out());"), Stmt::SetBad(Access { param: "out".into(), bindings: vec![] }));
        assert_eq!(one("$PDLSTATESETBAD(out);"), Stmt::StateSetBad("out".into()));
        assert_eq!(one("$PDLSTATESETBAD(out());"), Stmt::StateSetBad("out".into()));
    }

    #[test]
    fn meta_forms() {
        let Stmt::Expr(e) = one("$PDL(in)->dims(0);") else { panic!() };
        assert!(matches!(e, Expr::Meta { style: MetaStyle::Pdl, field: MetaField::Dims(_), .. }));
        let Stmt::Expr(e) = one("$PDL(in)->dims[0];") else { panic!() };
        assert!(matches!(e, Expr::Meta { style: MetaStyle::PdlBracket, .. }));
        let Stmt::Expr(e) = one("$PARENT(dims[ii]);") else { panic!() };
        assert!(matches!(e, Expr::Meta { style: MetaStyle::Inline, ref param, .. } if param == "PARENT"));
        let Stmt::Expr(e) = one("$PARENT();") else { panic!() };
        assert!(matches!(e, Expr::Access(_)));
        assert_eq!(one("$SETNDIMS($PARENT(ndims));"), Stmt::SetNdims(Expr::Meta {
            param: "PARENT".into(),
            field: MetaField::Ndims,
            style: MetaStyle::Inline
        }));
    }

    #[test]
    fn for_loop() {
        let s = one("for(i=$COMP(max_it); rp2+ip2 < 4 && i; i--) { ip *= 2 * rp; }");
        let Stmt::For(Some(init), Some(cond), Some(step), _) = s else { panic!() };
        assert!(matches!(*init, Stmt::Assign(_, _, Expr::Comp(_))));
        assert!(matches!(cond, Expr::Binary(BinOp::And, _, _)));
        assert!(matches!(*step, Stmt::Expr(Expr::IncDec { inc: false, prefix: false, .. })));
    }

    #[test]
    fn errors() {
        assert!(matches!(parse_kernel("$o() = frob(1);"), Err(KernelError::UnknownBuiltin(_))));
        assert!(matches!(parse_kernel("$o() = sqrt(1, 2);"), Err(KernelError::BuiltinArity { .. })));
        assert!(matches!(parse_kernel("$o() = 1"), Err(KernelError::SyntaxError { .. })));
        assert!(matches!(parse_kernel("loop(n) %{ x = 1;"), Err(KernelError::SyntaxError { .. })));
        assert!(matches!(parse_kernel("x = $TFD(1);"), Err(KernelError::TypeSwitchArity { .. })));
    }
}
