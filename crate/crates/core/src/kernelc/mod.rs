//! The kernel language: parsing, canonical formatting, elaboration against a
//! signature, and expansion into loop-nest text.
//!
//! Elaboration ([`elaborate`]) resolves every name in a parsed body and binds
//! each element access to loop indices or explicit index expressions. Both the
//! engine's interpreter and the text expander consume the resulting
//! [`Program`].

pub mod ast;
pub mod elaborate;
pub mod expand;
pub mod format;
pub mod lexer;
pub mod parser;

use std::fmt;

use thiserror::Error;

pub use ast::KernelAst;
pub use elaborate::{elaborate, ElabEnv, IAccess, IExpr, IIndex, IMeta, IStmt, Lvalue, Local, Program};
pub use expand::{expand_kernel, expand_program};
pub use format::format_kernel;
pub use parser::parse_kernel;

use crate::ndarray::Dtype;
use crate::sigparse::Signature;

/// Where a kernel body runs; decides which macros are available.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Context {
    /// `Code`, `BadCode`, `BackCode`, `BadBackCode`.
    Calc,
    /// `RedoDimsCode` of a calculation operator.
    RedoDims,
    /// `MakeComp` of a dataflow operator.
    MakeComp,
    /// `RedoDims` of a dataflow operator.
    FlowRedoDims,
    /// `EquivCPOffsCode`.
    EquivCpOffs,
}

impl fmt::Display for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Context::Calc => "calculation code",
            Context::RedoDims => "redodims code",
            Context::MakeComp => "makecomp code",
            Context::FlowRedoDims => "dataflow redodims code",
            Context::EquivCpOffs => "equivcpoffs code",
        })
    }
}

/// Good code runs when no input may hold bad values; bad code otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Good,
    Bad,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Good => "good",
            Variant::Bad => "bad",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KernelError {
    #[error("syntax error at {pos}: {msg}")]
    SyntaxError { pos: usize, msg: String },
    #[error("unknown parameter '{0}'")]
    UnknownParam(String),
    #[error("unknown dimension '{dim}'{}", param.as_ref().map(|p| format!(" for parameter '{p}'")).unwrap_or_default())]
    UnknownDim { param: Option<String>, dim: String },
    #[error("dimension '{dim}' of '{param}' is not bound by an index or an enclosing loop")]
    UnboundDim { param: String, dim: String },
    #[error("dimension '{dim}' bound twice in access to '{param}'")]
    DuplicateBinding { param: String, dim: String },
    #[error("unknown builtin '{0}'")]
    UnknownBuiltin(String),
    #[error("builtin '{name}' takes {expected} argument(s), got {got}")]
    BuiltinArity { name: String, expected: usize, got: usize },
    #[error("unknown $COMP field '{0}'")]
    UnknownCompField(String),
    #[error("unknown identifier '{0}'")]
    UnknownIdentifier(String),
    #[error("'{0}' declared twice in the same scope")]
    DuplicateDeclaration(String),
    #[error("type switch $T{letters} has no entry for generic type letter '{letter}'")]
    TypeSwitchMissingLetter { letters: String, letter: char },
    #[error("type switch $T{letters} expects one alternative per letter, got {got}")]
    TypeSwitchArity { letters: String, got: usize },
    #[error("$SIZE({0}) is write-only in redodims code")]
    SizeReadInRedoDims(String),
    #[error("element access to '{param}' is unavailable in {context}")]
    ElementAccessInRedoDims { param: String, context: Context },
    #[error("loop and threadloop are unavailable in {0}")]
    LoopInRedoDims(Context),
    #[error("{what} is unavailable in {context}")]
    NotAvailable { what: String, context: Context },
    #[error("cannot assign to {0}")]
    InvalidLvalue(String),
    #[error("threadloop must appear once, at the top level of a kernel")]
    ThreadLoopPlacement,
    #[error("a type cannot be used as a value")]
    TypeAsValue,
}

impl KernelError {
    pub(crate) fn syntax(pos: usize, msg: impl Into<String>) -> KernelError {
        KernelError::SyntaxError { pos, msg: msg.into() }
    }
}

/// Parses a body and checks it against `sig` in the calculation context,
/// with `$COMP` fields drawn from `otherpars`.
pub fn parse_kernel_for(text: &str, sig: &Signature, otherpars: &[String]) -> Result<KernelAst, KernelError> {
    let ast = parse_kernel(text)?;
    let env = ElabEnv::new(sig, Context::Calc, Dtype::Double, Variant::Bad).with_comp(otherpars.to_vec());
    elaborate(&ast, &env)?;
    Ok(ast)
}
