//! Tree-walking interpreter for elaborated kernels.
//!
//! Arithmetic rule: when both operands are integers the operation runs in
//! wrapping 64-bit signed arithmetic; any float operand makes it a 64-bit
//! float operation. Stores cast to the destination type. Integer division or
//! remainder by zero yields 0 and is counted in [`Machine::div_by_zero`].

use thiserror::Error;

use crate::kernelc::ast::{BinOp, Builtin};
use crate::kernelc::{IAccess, IExpr, IIndex, IMeta, IStmt, Lvalue, Program};
use crate::ndarray::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExecError {
    #[error("index out of bounds: {0}")]
    IndexOutOfBounds(String),
    #[error("$SIZE({dim}) assigned negative value {value}")]
    NegativeAssignedSize { dim: String, value: i64 },
    #[error("{0} is not supported here")]
    Unsupported(String),
    #[error("{0}")]
    Invalid(String),
}

/// A struct field queried through `$PDL(p)->...`, `$PARENT(...)` or
/// `$CHILD(...)`, with its index evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetaQuery {
    Ndims,
    Dims(i64),
    Dimincs(i64),
    Datatype,
    Nvals,
}

fn unsupported<T>(what: &str) -> Result<T, ExecError> {
    Err(ExecError::Unsupported(what.to_string()))
}

/// What a kernel can reach outside its own locals. Each execution context
/// implements the part it supports.
pub trait Host {
    fn access_base(&self, _param: usize) -> isize {
        0
    }
    fn active_size(&self, _param: usize, _k: usize) -> i64 {
        0
    }
    fn active_stride(&self, _param: usize, _k: usize) -> isize {
        0
    }
    fn read(&self, _param: usize, _off: isize) -> Result<Scalar, ExecError> {
        unsupported("element read")
    }
    /// Stores `v` cast to the parameter's type; returns the stored value.
    fn write(&mut self, _param: usize, _off: isize, _v: Scalar) -> Result<Scalar, ExecError> {
        unsupported("element write")
    }
    fn is_bad(&self, _param: usize, _v: Scalar) -> bool {
        false
    }
    fn bad_value(&self, _param: usize) -> Scalar {
        Scalar::Int(0)
    }
    fn state_is_bad(&self, _param: usize) -> bool {
        false
    }
    fn state_set(&mut self, _param: usize, _bad: bool) {}
    fn size(&self, _dim: usize) -> Result<i64, ExecError> {
        unsupported("$SIZE")
    }
    fn set_size(&mut self, _dim: usize, _v: i64) -> Result<(), ExecError> {
        unsupported("$SIZE assignment")
    }
    fn comp(&self, _idx: usize) -> Result<Scalar, ExecError> {
        unsupported("$COMP")
    }
    fn comp_index(&self, _idx: usize, _i: i64) -> Result<Scalar, ExecError> {
        unsupported("$COMP indexing")
    }
    fn set_comp(&mut self, _idx: usize, _v: Scalar) -> Result<(), ExecError> {
        unsupported("$COMP assignment")
    }
    fn set_comp_index(&mut self, _idx: usize, _i: i64, _v: Scalar) -> Result<(), ExecError> {
        unsupported("$COMP assignment")
    }
    fn bare(&self, _idx: usize) -> Result<Scalar, ExecError> {
        unsupported("other parameter access")
    }
    fn bare_index(&self, _idx: usize, _i: i64) -> Result<Scalar, ExecError> {
        unsupported("other parameter access")
    }
    fn meta(&self, _param: usize, _q: MetaQuery) -> Result<Scalar, ExecError> {
        unsupported("struct field access")
    }
    fn set_meta(&mut self, _param: usize, _q: MetaQuery, _v: i64) -> Result<(), ExecError> {
        unsupported("struct field assignment")
    }
    fn set_ndims(&mut self, _n: i64) -> Result<(), ExecError> {
        unsupported("$SETNDIMS")
    }
    fn set_dims(&mut self) -> Result<(), ExecError> {
        unsupported("$SETDIMS")
    }
    fn equiv_cp(&mut self, _pi: i64, _ci: i64, _oob: bool) -> Result<(), ExecError> {
        unsupported("$EquivCPOffs")
    }
    fn tuple_count(&self) -> usize {
        1
    }
    fn select_tuple(&mut self, _t: usize) {}
    fn reverse_sweep(&self) -> bool {
        false
    }
}

enum Flow {
    Normal,
    Break,
    Continue,
}

enum Place {
    Local(usize),
    Elem(usize, isize),
    Size(usize),
    Comp(usize),
    CompIndex(usize, i64),
    Meta(usize, MetaQuery),
}

pub struct Machine<'p, 'h, H: Host> {
    prog: &'p Program,
    pub host: &'h mut H,
    locals: Vec<Scalar>,
    loop_idx: Vec<i64>,
    check_bounds: bool,
    pub div_by_zero: u64,
}

fn zero_of(t: crate::ndarray::Dtype) -> Scalar {
    if t.is_float() {
        Scalar::Float(0.0)
    } else {
        Scalar::Int(0)
    }
}

#[inline]
fn int_arith(op: BinOp, x: i64, y: i64, divz: &mut u64) -> Scalar {
    Scalar::Int(match op {
        BinOp::Add => x.wrapping_add(y),
        BinOp::Sub => x.wrapping_sub(y),
        BinOp::Mul => x.wrapping_mul(y),
        BinOp::Div => {
            if y == 0 {
                *divz += 1;
                0
            } else {
                x.wrapping_div(y)
            }
        }
        BinOp::Mod => {
            if y == 0 {
                *divz += 1;
                0
            } else {
                x.wrapping_rem(y)
            }
        }
        BinOp::Pow => return Scalar::Float((x as f64).powf(y as f64)),
        BinOp::Lt => (x < y) as i64,
        BinOp::Le => (x <= y) as i64,
        BinOp::Gt => (x > y) as i64,
        BinOp::Ge => (x >= y) as i64,
        BinOp::Eq => (x == y) as i64,
        BinOp::Ne => (x != y) as i64,
        BinOp::And => (x != 0 && y != 0) as i64,
        BinOp::Or => (x != 0 || y != 0) as i64,
    })
}

#[inline]
fn float_arith(op: BinOp, x: f64, y: f64) -> Scalar {
    match op {
        BinOp::Add => Scalar::Float(x + y),
        BinOp::Sub => Scalar::Float(x - y),
        BinOp::Mul => Scalar::Float(x * y),
        BinOp::Div => Scalar::Float(x / y),
        BinOp::Mod => Scalar::Float(x % y),
        BinOp::Pow => Scalar::Float(x.powf(y)),
        BinOp::Lt => Scalar::Int((x < y) as i64),
        BinOp::Le => Scalar::Int((x <= y) as i64),
        BinOp::Gt => Scalar::Int((x > y) as i64),
        BinOp::Ge => Scalar::Int((x >= y) as i64),
        BinOp::Eq => Scalar::Int((x == y) as i64),
        BinOp::Ne => Scalar::Int((x != y) as i64),
        BinOp::And => Scalar::Int((x != 0.0 && y != 0.0) as i64),
        BinOp::Or => Scalar::Int((x != 0.0 || y != 0.0) as i64),
    }
}

/// Applies a binary operator under the arithmetic rule.
pub fn arith(op: BinOp, a: Scalar, b: Scalar, divz: &mut u64) -> Scalar {
    match (a, b) {
        (Scalar::Int(x), Scalar::Int(y)) => int_arith(op, x, y, divz),
        _ => float_arith(op, a.as_f64(), b.as_f64()),
    }
}

fn builtin(b: Builtin, args: &[Scalar]) -> Scalar {
    let x = args[0].as_f64();
    Scalar::Float(match b {
        Builtin::Sqrt => x.sqrt(),
        Builtin::Pow => x.powf(args[1].as_f64()),
        Builtin::Sin => x.sin(),
        Builtin::Cos => x.cos(),
        Builtin::Log => x.ln(),
        Builtin::Exp => x.exp(),
        Builtin::Fabs => x.abs(),
        Builtin::Floor => x.floor(),
        Builtin::Ceil => x.ceil(),
    })
}

impl<'p, 'h, H: Host> Machine<'p, 'h, H> {
    pub fn new(prog: &'p Program, host: &'h mut H, check_bounds: bool) -> Self {
        let locals = prog.locals.iter().map(|l| zero_of(l.ty)).collect();
        Machine { prog, host, locals, loop_idx: vec![0; prog.dims.len()], check_bounds, div_by_zero: 0 }
    }

    /// Runs the whole body once.
    pub fn run(&mut self) -> Result<(), ExecError> {
        let prog = self.prog;
        self.exec_block(&prog.stmts)?;
        Ok(())
    }

    fn exec_block(&mut self, stmts: &[IStmt]) -> Result<Flow, ExecError> {
        for s in stmts {
            match self.exec(s)? {
                Flow::Normal => {}
                f => return Ok(f),
            }
        }
        Ok(Flow::Normal)
    }

    fn exec(&mut self, s: &IStmt) -> Result<Flow, ExecError> {
        match s {
            IStmt::Declare(slot, init) => {
                let ty = self.prog.locals[*slot].ty;
                let v = match init {
                    Some(e) => ty.cast(self.eval(e)?),
                    None => zero_of(ty),
                };
                self.locals[*slot] = v;
            }
            IStmt::Eval(e) => {
                self.eval(e)?;
            }
            IStmt::If(c, a, b) => {
                let branch = if self.eval(c)?.is_truthy() { a } else { b };
                return self.exec_block(branch);
            }
            IStmt::For(init, cond, step, body) => {
                self.exec_block(init)?;
                loop {
                    if let Some(c) = cond {
                        if !self.eval(c)?.is_truthy() {
                            break;
                        }
                    }
                    if let Flow::Break = self.exec_block(body)? {
                        break;
                    }
                    self.exec_block(step)?;
                }
            }
            IStmt::While(c, body) => {
                while self.eval(c)?.is_truthy() {
                    if let Flow::Break = self.exec_block(body)? {
                        break;
                    }
                }
            }
            IStmt::Block(b) | IStmt::Seq(b) => return self.exec_block(b),
            IStmt::Loop(d, body) => {
                let n = self.host.size(*d)?;
                let saved = self.loop_idx[*d];
                for i in 0..n {
                    self.loop_idx[*d] = i;
                    if let Flow::Break = self.exec_block(body)? {
                        break;
                    }
                }
                self.loop_idx[*d] = saved;
            }
            IStmt::ThreadLoop(body) => {
                let n = self.host.tuple_count();
                let rev = self.host.reverse_sweep();
                for k in 0..n {
                    let t = if rev { n - 1 - k } else { k };
                    self.host.select_tuple(t);
                    if let Flow::Break = self.exec_block(body)? {
                        break;
                    }
                }
                if n > 0 {
                    self.host.select_tuple(0);
                }
            }
            IStmt::Break => return Ok(Flow::Break),
            IStmt::Continue => return Ok(Flow::Continue),
            IStmt::SetBad(a) => {
                let off = self.offset(a)?;
                let bad = self.host.bad_value(a.param);
                self.host.write(a.param, off, bad)?;
                self.host.state_set(a.param, true);
            }
            IStmt::StateSet { param, bad } => self.host.state_set(*param, *bad),
            IStmt::SetNdims(e) => {
                let n = self.eval(e)?.trunc_i64();
                self.host.set_ndims(n)?;
            }
            IStmt::SetDims => self.host.set_dims()?,
            IStmt::EquivCp(a, b, c) => {
                let pi = self.eval(a)?.trunc_i64();
                let ci = self.eval(b)?.trunc_i64();
                let oob = match c {
                    Some(c) => self.eval(c)?.is_truthy(),
                    None => false,
                };
                self.host.equiv_cp(pi, ci, oob)?;
            }
        }
        Ok(Flow::Normal)
    }

    fn offset(&mut self, a: &IAccess) -> Result<isize, ExecError> {
        let mut off = self.host.access_base(a.param);
        for (k, ix) in a.idx.iter().enumerate() {
            let i = match ix {
                IIndex::Loop(d) => self.loop_idx[*d],
                IIndex::Expr(e) => self.eval(e)?.trunc_i64(),
            };
            if self.check_bounds {
                let n = self.host.active_size(a.param, k);
                if i < 0 || i >= n {
                    return Err(ExecError::IndexOutOfBounds(format!(
                        "index {i} on dim '{}' of '{}' (size {n})",
                        self.prog.param_dims[a.param][k], self.prog.params[a.param]
                    )));
                }
            }
            off += i as isize * self.host.active_stride(a.param, k);
        }
        Ok(off)
    }

    fn meta_query(&mut self, m: &IMeta) -> Result<MetaQuery, ExecError> {
        Ok(match m {
            IMeta::Ndims => MetaQuery::Ndims,
            IMeta::Datatype => MetaQuery::Datatype,
            IMeta::Nvals => MetaQuery::Nvals,
            IMeta::Dims(i) => MetaQuery::Dims(self.eval(i)?.trunc_i64()),
            IMeta::Dimincs(i) => MetaQuery::Dimincs(self.eval(i)?.trunc_i64()),
        })
    }

    fn place(&mut self, l: &Lvalue) -> Result<Place, ExecError> {
        Ok(match l {
            Lvalue::Local(s) => Place::Local(*s),
            Lvalue::Access(a) => Place::Elem(a.param, self.offset(a)?),
            Lvalue::Size(d) => Place::Size(*d),
            Lvalue::Comp(c) => Place::Comp(*c),
            Lvalue::CompIndex(c, i) => Place::CompIndex(*c, self.eval(i)?.trunc_i64()),
            Lvalue::Meta(p, m) => Place::Meta(*p, self.meta_query(m)?),
        })
    }

    fn read_place(&mut self, p: &Place) -> Result<Scalar, ExecError> {
        match *p {
            Place::Local(s) => Ok(self.locals[s]),
            Place::Elem(param, off) => self.host.read(param, off),
            Place::Size(d) => self.host.size(d).map(Scalar::Int),
            Place::Comp(c) => self.host.comp(c),
            Place::CompIndex(c, i) => self.host.comp_index(c, i),
            Place::Meta(param, q) => self.host.meta(param, q),
        }
    }

    fn write_place(&mut self, p: &Place, v: Scalar) -> Result<Scalar, ExecError> {
        match *p {
            Place::Local(s) => {
                let stored = self.prog.locals[s].ty.cast(v);
                self.locals[s] = stored;
                Ok(stored)
            }
            Place::Elem(param, off) => self.host.write(param, off, v),
            Place::Size(d) => {
                let n = v.trunc_i64();
                if n < 0 {
                    return Err(ExecError::NegativeAssignedSize { dim: self.prog.dims[d].clone(), value: n });
                }
                self.host.set_size(d, n)?;
                Ok(Scalar::Int(n))
            }
            Place::Comp(c) => {
                self.host.set_comp(c, v)?;
                Ok(v)
            }
            Place::CompIndex(c, i) => {
                self.host.set_comp_index(c, i, v)?;
                Ok(v)
            }
            Place::Meta(param, q) => {
                self.host.set_meta(param, q, v.trunc_i64())?;
                Ok(Scalar::Int(v.trunc_i64()))
            }
        }
    }

    pub fn eval(&mut self, e: &IExpr) -> Result<Scalar, ExecError> {
        Ok(match e {
            IExpr::Const(c) => *c,
            IExpr::Local(s) => self.locals[*s],
            IExpr::LoopIndex(d) => Scalar::Int(self.loop_idx[*d]),
            IExpr::Access(a) => {
                let off = self.offset(a)?;
                self.host.read(a.param, off)?
            }
            IExpr::Binary(op, a, b) => match op {
                BinOp::And => {
                    let r = self.eval(a)?.is_truthy() && self.eval(b)?.is_truthy();
                    Scalar::Int(r as i64)
                }
                BinOp::Or => {
                    let r = self.eval(a)?.is_truthy() || self.eval(b)?.is_truthy();
                    Scalar::Int(r as i64)
                }
                _ => {
                    let x = self.eval(a)?;
                    let y = self.eval(b)?;
                    arith(*op, x, y, &mut self.div_by_zero)
                }
            },
            IExpr::Assign(l, op, r) => {
                let v = self.eval(r)?;
                let place = self.place(l)?;
                let v = match op {
                    Some(op) => {
                        let cur = self.read_place(&place)?;
                        arith(*op, cur, v, &mut self.div_by_zero)
                    }
                    None => v,
                };
                self.write_place(&place, v)?
            }
            IExpr::IncDec { target, inc, prefix } => {
                let place = self.place(target)?;
                let cur = self.read_place(&place)?;
                let delta = if *inc { BinOp::Add } else { BinOp::Sub };
                let next = arith(delta, cur, Scalar::Int(1), &mut self.div_by_zero);
                let stored = self.write_place(&place, next)?;
                if *prefix {
                    stored
                } else {
                    cur
                }
            }
            IExpr::Size(d) => Scalar::Int(self.host.size(*d)?),
            IExpr::Comp(c) => self.host.comp(*c)?,
            IExpr::CompIndex(c, i) => {
                let i = self.eval(i)?.trunc_i64();
                self.host.comp_index(*c, i)?
            }
            IExpr::Bare(b) => self.host.bare(*b)?,
            IExpr::BareIndex(b, i) => {
                let i = self.eval(i)?.trunc_i64();
                self.host.bare_index(*b, i)?
            }
            IExpr::Meta(p, m) => {
                let q = self.meta_query(m)?;
                self.host.meta(*p, q)?
            }
            IExpr::Call(b, args) => {
                let mut vals = [Scalar::Int(0); 2];
                for (i, a) in args.iter().enumerate() {
                    vals[i] = self.eval(a)?;
                }
                builtin(*b, &vals[..args.len()])
            }
            IExpr::Neg(x) => match self.eval(x)? {
                Scalar::Int(i) => Scalar::Int(i.wrapping_neg()),
                Scalar::Float(f) => Scalar::Float(-f),
            },
            IExpr::Not(x) => Scalar::Int(!self.eval(x)?.is_truthy() as i64),
            IExpr::Ternary(c, a, b) => {
                if self.eval(c)?.is_truthy() {
                    self.eval(a)?
                } else {
                    self.eval(b)?
                }
            }
            IExpr::Cast(t, x) => t.cast(self.eval(x)?),
            IExpr::IsBad { access, negate } => {
                let off = self.offset(access)?;
                let v = self.host.read(access.param, off)?;
                Scalar::Int((self.host.is_bad(access.param, v) != *negate) as i64)
            }
            IExpr::IsBadVar { local, param, negate } => {
                let v = self.locals[*local];
                Scalar::Int((self.host.is_bad(*param, v) != *negate) as i64)
            }
            IExpr::SetBadVar { local, param } => {
                let bad = self.host.bad_value(*param);
                let stored = self.prog.locals[*local].ty.cast(bad);
                self.locals[*local] = stored;
                stored
            }
            IExpr::StateIsBad { param, negate } => Scalar::Int((self.host.state_is_bad(*param) != *negate) as i64),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_rule() {
        let mut d = 0;
        assert_eq!(arith(BinOp::Div, Scalar::Int(7), Scalar::Int(2), &mut d), Scalar::Int(3));
        assert_eq!(arith(BinOp::Div, Scalar::Int(-7), Scalar::Int(2), &mut d), Scalar::Int(-3));
        assert_eq!(arith(BinOp::Div, Scalar::Int(7), Scalar::Float(2.0), &mut d), Scalar::Float(3.5));
        assert_eq!(arith(BinOp::Div, Scalar::Int(1), Scalar::Int(0), &mut d), Scalar::Int(0));
        assert_eq!(d, 1);
        assert_eq!(arith(BinOp::Add, Scalar::Int(i64::MAX), Scalar::Int(1), &mut d), Scalar::Int(i64::MIN));
        assert_eq!(arith(BinOp::Lt, Scalar::Int(1), Scalar::Float(1.5), &mut d), Scalar::Int(1));
        assert_eq!(arith(BinOp::Pow, Scalar::Int(2), Scalar::Int(10), &mut d), Scalar::Float(1024.0));
    }
}
