//! Command-line front end: `run`, `expand` and `plan`.
//!
//! Exit codes: 0 on success, 1 when an operator, kernel or dataflow step
//! fails, 2 on malformed command lines or array literals.

pub mod literal;
pub mod opdef;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::dataflow::{Flow, FlowError};
use crate::engine::plan::strides_for;
use crate::engine::{CallArgs, EngineError, OtherPars, OtherValue, Registry, RunOptions};
use crate::kernelc::expand_program;
use crate::ndarray::{fresh_dimincs, Dtype, NdArray};

pub use literal::{format_array, parse_array_literal, LiteralError};
pub use opdef::{parse_opdefs, OpdefError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Literal(#[from] LiteralError),
    #[error(transparent)]
    Opdef(#[from] OpdefError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("{op} runs only on {allowed}, not {got}")]
    TypeNotInGenericList { op: String, got: Dtype, allowed: String },
    #[error("{0} has no bad-value code")]
    NoBadVariant(String),
    #[error("{path}: {err}")]
    Io { path: String, err: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Literal(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ppkern", version, about = "Run, expand and plan threaded array operators")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Run an operator and print its outputs, one literal per line.
    Run {
        /// Operator definition file; the bundled corpus when omitted.
        #[arg(long)]
        ops: Option<PathBuf>,
        #[arg(long)]
        op: String,
        /// Array argument, e.g. `a=double[3]{1 2 3}`.
        #[arg(long = "arg", value_name = "NAME=LITERAL")]
        args: Vec<String>,
        /// Other parameter; lists are comma-separated.
        #[arg(long = "other", value_name = "NAME=VALUE")]
        other: Vec<String>,
        #[arg(long)]
        check_bounds: bool,
    },
    /// Print the loop-nest expansion of an operator's kernel.
    Expand {
        #[arg(long)]
        ops: Option<PathBuf>,
        #[arg(long)]
        op: String,
        #[arg(long = "type", value_name = "DTYPE")]
        dtype: String,
        #[arg(long)]
        bad: bool,
        #[arg(long)]
        check_bounds: bool,
    },
    /// Show how argument shapes bind, without running anything.
    Plan {
        #[arg(long)]
        ops: Option<PathBuf>,
        #[arg(long)]
        op: String,
        /// e.g. `a=[2,3];b=short[3];c=null`.
        #[arg(long)]
        shapes: String,
        #[arg(long = "other", value_name = "NAME=VALUE")]
        other: Vec<String>,
    },
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_cli<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch(cli.cmd) {
        Ok(text) => {
            let _ = out.write_all(text.as_bytes());
            0
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn registry(ops: Option<PathBuf>) -> Result<Registry, CliError> {
    let Some(path) = ops else { return Ok(Registry::with_corpus()) };
    let text = std::fs::read_to_string(&path)
        .map_err(|err| CliError::Io { path: path.display().to_string(), err })?;
    let mut reg = Registry::new();
    for def in parse_opdefs(&text)? {
        reg.register_op(def)?;
    }
    Ok(reg)
}

fn split_kv(s: &str) -> Result<(&str, &str), CliError> {
    s.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .filter(|(k, _)| !k.is_empty())
        .ok_or_else(|| CliError::Usage(format!("expected NAME=VALUE, got '{s}'")))
}

fn other_pars(reg: &Registry, op: &str, items: &[String]) -> Result<OtherPars, CliError> {
    let def = reg.get(op)?;
    let mut other = OtherPars::new();
    for item in items {
        let (k, v) = split_kv(item)?;
        let decl = def
            .otherpars
            .iter()
            .find(|d| d.name == k)
            .ok_or_else(|| EngineError::UnknownOtherPar(k.to_string()))?;
        let val = OtherValue::parse(decl.kind, v)
            .ok_or_else(|| CliError::Usage(format!("'{v}' is not a valid {} for '{k}'", decl.kind)))?;
        other.insert(k.to_string(), val);
    }
    Ok(other)
}

fn dispatch(cmd: Cmd) -> Result<String, CliError> {
    match cmd {
        Cmd::Run { ops, op, args, other, check_bounds } => {
            let reg = registry(ops)?;
            let other = other_pars(&reg, &op, &other)?;
            let mut call = CallArgs::new();
            for a in &args {
                let (k, v) = split_kv(a)?;
                call.set(k, parse_array_literal(v)?);
            }
            let opts = RunOptions { check_bounds, ..RunOptions::default() };
            let def = reg.get(&op)?;
            let outputs = if def.is_flow() {
                let parent = call.take("PARENT").ok_or_else(|| EngineError::MissingInput("PARENT".into()))?;
                if let Some(n) = call.names().next() {
                    return Err(EngineError::UnknownArg(n.clone()).into());
                }
                let mut flow = Flow::new();
                flow.options = opts;
                let p = flow.insert(parent);
                let c = flow.connect(&reg, &op, p, &other)?;
                vec![flow.read(c)?]
            } else {
                reg.run_op(&op, &mut call, &other, &opts)?
            };
            Ok(outputs.iter().map(|a| format_array(a) + "\n").collect())
        }
        Cmd::Expand { ops, op, dtype, bad, check_bounds } => {
            let reg = registry(ops)?;
            let def = reg.get(&op)?;
            let t = Dtype::from_name(&dtype).ok_or(LiteralError::UnknownDtypeName(dtype))?;
            if !def.generictypes.contains(t) {
                return Err(CliError::TypeNotInGenericList {
                    op,
                    got: t,
                    allowed: def.generictypes.types().iter().map(|t| t.to_string()).collect::<Vec<_>>().join(", "),
                });
            }
            let section = match (bad, def.code.is_some()) {
                (true, _) if def.badcode.is_none() => return Err(CliError::NoBadVariant(op)),
                (true, _) => "badcode",
                (false, true) => "code",
                (false, false) => "equivcpoffs",
            };
            let prog = def.program(section, t)?.ok_or_else(|| EngineError::NoCalcCode(op.clone()))?;
            Ok(expand_program(&prog, &op, check_bounds))
        }
        Cmd::Plan { ops, op, shapes, other } => {
            let reg = registry(ops)?;
            let other = other_pars(&reg, &op, &other)?;
            let def = reg.get(&op)?;
            let mut call = CallArgs::new();
            for item in shapes.split(';').map(str::trim).filter(|s| !s.is_empty()) {
                let (k, v) = split_kv(item)?;
                call.set(k, parse_shape(v)?);
            }
            let plan = reg.plan(&op, &call, &other)?;
            let mut text = plan.to_string();
            for (p, pp) in def.sig.params.iter().zip(&plan.params) {
                let (dims, incs) = match call.get(&p.name).filter(|a| !a.is_null()) {
                    Some(a) => (a.dims().to_vec(), a.dimincs().to_vec()),
                    None => (pp.dims.clone(), fresh_dimincs(&pp.dims)),
                };
                let tdims: &[usize] = if p.is_temp() { &[] } else { &plan.thread_dims };
                let (act, thr) = strides_for(&dims, &incs, p.active_dims.len(), tdims);
                text.push_str(&format!("strides {}: active {act:?} thread {thr:?}\n", p.name));
            }
            for pp in plan.params.iter().filter(|pp| pp.role == crate::engine::Role::Output) {
                let dims: Vec<String> = pp.dims.iter().map(usize::to_string).collect();
                text.push_str(&format!("{}=[{}]\n", pp.name, dims.join(",")));
            }
            Ok(text)
        }
    }
}

/// `[2,3]`, `short[2,3]` or `null`; values are zeros.
fn parse_shape(s: &str) -> Result<NdArray, CliError> {
    if s == "null" {
        return Ok(NdArray::null());
    }
    let open = s.find('[').ok_or_else(|| CliError::Usage(format!("bad shape '{s}'")))?;
    let name = s[..open].trim();
    let dtype = if name.is_empty() {
        Dtype::Double
    } else {
        Dtype::from_name(name).ok_or_else(|| LiteralError::UnknownDtypeName(name.to_string()))?
    };
    let inner = s[open + 1..]
        .strip_suffix(']')
        .ok_or_else(|| CliError::Usage(format!("bad shape '{s}'")))?;
    let dims = inner
        .split(',')
        .map(str::trim)
        .filter(|d| !d.is_empty())
        .map(|d| d.parse::<usize>().map_err(|_| CliError::Usage(format!("bad dim '{d}' in '{s}'"))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(NdArray::zeros(dtype, &dims))
}
