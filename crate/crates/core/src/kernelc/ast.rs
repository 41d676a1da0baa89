//! Syntax tree of kernel bodies, before any signature is consulted.

use crate::ndarray::Dtype;

#[derive(Debug, Clone, PartialEq)]
pub enum TypeSpec {
    Named(Dtype),
    /// `$GENERIC()`
    Generic,
    /// `$TFD(float,double)`
    Switch(Vec<char>, Vec<Dtype>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Declarator {
    pub name: String,
    pub init: Option<Expr>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssignOp {
    Set,
    Add,
    Sub,
    Mul,
    Div,
}

impl AssignOp {
    pub fn as_str(self) -> &'static str {
        match self {
            AssignOp::Set => "=",
            AssignOp::Add => "+=",
            AssignOp::Sub => "-=",
            AssignOp::Mul => "*=",
            AssignOp::Div => "/=",
        }
    }

    pub fn binop(self) -> Option<BinOp> {
        match self {
            AssignOp::Set => None,
            AssignOp::Add => Some(BinOp::Add),
            AssignOp::Sub => Some(BinOp::Sub),
            AssignOp::Mul => Some(BinOp::Mul),
            AssignOp::Div => Some(BinOp::Div),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Pow,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinOp {
    pub fn as_str(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Mod => "%",
            BinOp::Pow => "**",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    /// Binding strength; larger binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne => 3,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul | BinOp::Div | BinOp::Mod => 6,
            BinOp::Pow => 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    Sqrt,
    Pow,
    Sin,
    Cos,
    Log,
    Exp,
    Fabs,
    Floor,
    Ceil,
}

impl Builtin {
    pub fn from_name(name: &str) -> Option<Builtin> {
        Some(match name {
            "sqrt" => Builtin::Sqrt,
            "pow" => Builtin::Pow,
            "sin" => Builtin::Sin,
            "cos" => Builtin::Cos,
            "log" => Builtin::Log,
            "exp" => Builtin::Exp,
            "fabs" => Builtin::Fabs,
            "floor" => Builtin::Floor,
            "ceil" => Builtin::Ceil,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Sqrt => "sqrt",
            Builtin::Pow => "pow",
            Builtin::Sin => "sin",
            Builtin::Cos => "cos",
            Builtin::Log => "log",
            Builtin::Exp => "exp",
            Builtin::Fabs => "fabs",
            Builtin::Floor => "floor",
            Builtin::Ceil => "ceil",
        }
    }

    pub fn arity(self) -> usize {
        if self == Builtin::Pow {
            2
        } else {
            1
        }
    }
}

/// Struct fields reachable through `$PDL(p)->field`, `$PARENT(field)` and
/// `$CHILD(field)`.
#[derive(Debug, Clone, PartialEq)]
pub enum MetaField {
    Ndims,
    Dims(Box<Expr>),
    Dimincs(Box<Expr>),
    Datatype,
    Nvals,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetaStyle {
    /// `$PDL(p)->dims(i)`
    Pdl,
    /// `$PDL(p)->dims[i]`
    PdlBracket,
    /// `$PARENT(dims[i])`
    Inline,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Access {
    pub param: String,
    pub bindings: Vec<(String, Expr)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SwitchAlt {
    Type(Dtype),
    Expr(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Int(i64),
    Float(f64),
    Nan,
    Infinity,
    Ident(String),
    Access(Access),
    Size(String),
    Comp(String),
    Index(Box<Expr>, Box<Expr>),
    Meta { param: String, field: MetaField, style: MetaStyle },
    TypeSwitch(Vec<char>, Vec<SwitchAlt>),
    Call(Builtin, Vec<Expr>),
    Unary(UnOp, Box<Expr>),
    IncDec { target: Box<Expr>, inc: bool, prefix: bool },
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Ternary(Box<Expr>, Box<Expr>, Box<Expr>),
    Assign(Box<Expr>, AssignOp, Box<Expr>),
    Cast(TypeSpec, Box<Expr>),
    IsBad(Access),
    IsGood(Access),
    IsBadVar(String, String),
    IsGoodVar(String, String),
    SetBadVar(String, String),
    StateIsBad(String),
    StateIsGood(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Declare(TypeSpec, Vec<Declarator>),
    Assign(Expr, AssignOp, Expr),
    If(Expr, Box<Stmt>, Option<Box<Stmt>>),
    For(Option<Box<Stmt>>, Option<Expr>, Option<Box<Stmt>>, Box<Stmt>),
    While(Expr, Box<Stmt>),
    Block(Vec<Stmt>),
    LoopOver(String, Vec<Stmt>),
    ThreadLoop(Vec<Stmt>),
    Expr(Expr),
    Break,
    Continue,
    Empty,
    SetBad(Access),
    StateSetBad(String),
    StateSetGood(String),
    SetNdims(Expr),
    SetDims,
    EquivCpOffs(Expr, Expr),
    EquivCpTrunc(Expr, Expr, Expr),
    DoCompDims,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelAst {
    pub stmts: Vec<Stmt>,
}
