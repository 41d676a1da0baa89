//! Operator registry and call execution.
//!
//! A call goes through: argument role checks, in-place linking, good/bad
//! code selection, redodims, broadcast planning, dtype conversion, the
//! per-tuple kernel sweep, and output bad-flag bookkeeping.

pub mod interp;
pub mod plan;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::kernelc::{self, elaborate, Context, ElabEnv, KernelAst, KernelError, Program, Variant};
use crate::ndarray::{ArrayError, Buffer, Dtype, NdArray, Scalar};
use crate::sigparse::{signature, SigError, Signature};
use crate::typesys::{resolve_generic, GenericList, TypeError};

pub use interp::{ExecError, Host, Machine, MetaQuery};
pub use plan::{make_plan, BroadcastPlan, ParamPlan, Role};

use plan::{role_of, strides_for};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("unknown operator '{0}'")]
    UnknownOp(String),
    #[error("operator '{0}' is already registered")]
    DuplicateOpName(String),
    #[error("signature: {0}")]
    Signature(#[from] SigError),
    #[error("type: {0}")]
    Type(#[from] TypeError),
    #[error("{op}: {section}: {err}")]
    Kernel { op: String, section: String, err: KernelError },
    #[error("{op}: {msg}")]
    KernelValidationError { op: String, msg: String },
    #[error("bad otherpars declaration '{0}'")]
    BadOtherParDecl(String),
    #[error("missing other parameter '{0}'")]
    MissingOtherPar(String),
    #[error("unknown other parameter '{0}'")]
    UnknownOtherPar(String),
    #[error("other parameter '{name}' expects {expected}")]
    OtherParMismatch { name: String, expected: OtherKind },
    #[error("no parameter named '{0}'")]
    UnknownArg(String),
    #[error("missing input '{0}'")]
    MissingInput(String),
    #[error("input '{0}' is null")]
    NullInput(String),
    #[error("[oca] parameter '{0}' must not be supplied")]
    SuppliedOcaParam(String),
    #[error("temporary '{0}' must not be supplied")]
    SuppliedTemp(String),
    #[error("[nc] output '{0}' must be supplied")]
    MissingNcOutput(String),
    #[error("dim '{dim}' of '{param}': size {got} does not match bound size {expected}")]
    ActiveDimMismatch { param: String, dim: String, expected: usize, got: usize },
    #[error("dim '{dim}' of '{param}': size {got} does not match fixed size {fixed}")]
    FixedSizeMismatch { param: String, dim: String, fixed: usize, got: usize },
    #[error("size of dim '{dim}' of '{param}' cannot be determined")]
    UnresolvedDim { param: String, dim: String },
    #[error(
        "threading rule 3 violated at thread dim {pos}: '{a}' has size {a_size}, '{b}' has size {b_size}"
    )]
    ThreadDimMismatch { pos: usize, a: String, a_size: usize, b: String, b_size: usize },
    #[error("output '{param}' has dims {got:?}, expected {expected:?}")]
    OutputShapeMismatch { param: String, expected: Vec<usize>, got: Vec<usize> },
    #[error("in-place '{input}' has dims {got:?} but the output needs {expected:?}")]
    InplaceShapeMismatch { input: String, expected: Vec<usize>, got: Vec<usize> },
    #[error("in-place '{input}' runs as {a} but its output as {b}")]
    InplaceTypeMismatch { input: String, a: Dtype, b: Dtype },
    #[error("{op} does not accept bad values, but '{param}' has its bad flag set")]
    BadValuesForbidden { op: String, param: String },
    #[error("{0} has no calculation code")]
    NoCalcCode(String),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Array(#[from] ArrayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OtherKind {
    Int,
    Float,
    Str,
    IntList,
    FloatList,
}

impl fmt::Display for OtherKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OtherKind::Int => "an integer",
            OtherKind::Float => "a number",
            OtherKind::Str => "a string",
            OtherKind::IntList => "a list of integers",
            OtherKind::FloatList => "a list of numbers",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OtherParDecl {
    pub name: String,
    pub kind: OtherKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OtherValue {
    Int(i64),
    Float(f64),
    Str(String),
    IntList(Vec<i64>),
    FloatList(Vec<f64>),
}

impl OtherValue {
    fn scalar(&self) -> Result<Scalar, ExecError> {
        match self {
            OtherValue::Int(i) => Ok(Scalar::Int(*i)),
            OtherValue::Float(f) => Ok(Scalar::Float(*f)),
            _ => Err(ExecError::Invalid("list or string value used as a number".into())),
        }
    }

    fn index(&self, i: i64) -> Result<Scalar, ExecError> {
        let oob = || ExecError::IndexOutOfBounds(format!("list index {i}"));
        let i = usize::try_from(i).map_err(|_| oob())?;
        match self {
            OtherValue::IntList(v) => v.get(i).map(|&x| Scalar::Int(x)).ok_or_else(oob),
            OtherValue::FloatList(v) => v.get(i).map(|&x| Scalar::Float(x)).ok_or_else(oob),
            _ => Err(ExecError::Invalid("indexing a value that is not a list".into())),
        }
    }

    /// Parses command-line text according to a declared kind.
    pub fn parse(kind: OtherKind, text: &str) -> Option<OtherValue> {
        let list = |t: &str| t.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect::<Vec<_>>();
        match kind {
            OtherKind::Int => text.trim().parse().ok().map(OtherValue::Int),
            OtherKind::Float => text.trim().parse().ok().map(OtherValue::Float),
            OtherKind::Str => Some(OtherValue::Str(text.to_string())),
            OtherKind::IntList => list(text).iter().map(|s| s.parse().ok()).collect::<Option<_>>().map(OtherValue::IntList),
            OtherKind::FloatList => {
                list(text).iter().map(|s| s.parse().ok()).collect::<Option<_>>().map(OtherValue::FloatList)
            }
        }
    }
}

pub type OtherPars = BTreeMap<String, OtherValue>;

/// Parses C-like declarations such as `int max_it; double f; int dims[]`.
pub fn parse_decls(text: &str) -> Result<Vec<OtherParDecl>, EngineError> {
    let mut out: Vec<OtherParDecl> = Vec::new();
    for part in text.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        let bad = || EngineError::BadOtherParDecl(part.to_string());
        let (ty, name) = part.rsplit_once(|c: char| c.is_whitespace() || c == '*').ok_or_else(bad)?;
        let pointer = ty.trim_end().ends_with('*') || part.contains('*');
        let ty = ty.trim().trim_end_matches('*').trim();
        let (name, list) = match name.strip_suffix("[]") {
            Some(n) => (n, true),
            None => (name, false),
        };
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(bad());
        }
        let kind = match (ty, pointer, list) {
            ("char", true, false) | ("SV", true, false) | ("string", false, false) => OtherKind::Str,
            ("float" | "double", false, l) => {
                if l {
                    OtherKind::FloatList
                } else {
                    OtherKind::Float
                }
            }
            (t, false, l) if crate::kernelc::parser::type_from_name(t).is_some() => {
                if l {
                    OtherKind::IntList
                } else {
                    OtherKind::Int
                }
            }
            _ => return Err(bad()),
        };
        if out.iter().any(|d| d.name == name) {
            return Err(bad());
        }
        out.push(OtherParDecl { name: name.to_string(), kind });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HandleBad {
    /// Error out on any input with the bad flag set.
    Forbid,
    /// Run the good code; outputs inherit the inputs' bad flag.
    #[default]
    Ignore,
    /// Run the bad code when any input has the bad flag set.
    Handle,
}

#[derive(Debug, Clone, Default)]
pub struct FlowDef {
    pub defaultflow: bool,
    pub reversible: bool,
    pub backcode: Option<KernelAst>,
    pub badbackcode: Option<KernelAst>,
    pub equivcpoffs: Option<KernelAst>,
    pub makecomp: Option<KernelAst>,
    pub comp: Vec<OtherParDecl>,
    pub redodims: Option<KernelAst>,
}

#[derive(Debug, Clone)]
pub struct OpDef {
    pub name: String,
    pub sig: Signature,
    pub otherpars: Vec<OtherParDecl>,
    pub generictypes: GenericList,
    pub code: Option<KernelAst>,
    pub badcode: Option<KernelAst>,
    pub handlebad: HandleBad,
    pub inplace: Option<(String, String)>,
    pub redodimscode: Option<KernelAst>,
    pub boundscheck: bool,
    pub nopthread: bool,
    pub p2child: bool,
    pub flow: FlowDef,
}

impl OpDef {
    pub fn new(name: &str, pars: &str) -> Result<OpDef, EngineError> {
        Ok(OpDef {
            name: name.to_string(),
            sig: signature(pars)?,
            otherpars: Vec::new(),
            generictypes: GenericList::all(),
            code: None,
            badcode: None,
            handlebad: HandleBad::Ignore,
            inplace: None,
            redodimscode: None,
            boundscheck: false,
            nopthread: false,
            p2child: false,
            flow: FlowDef::default(),
        })
    }

    /// A dataflow operator with the implicit `PARENT(); [oca]CHILD()` signature.
    pub fn p2child(name: &str) -> OpDef {
        let mut d = OpDef::new(name, "PARENT(); [oca]CHILD()").expect("fixed signature parses");
        d.p2child = true;
        d
    }

    fn parse_section(&self, section: &str, text: &str) -> Result<KernelAst, EngineError> {
        kernelc::parse_kernel(text).map_err(|err| EngineError::Kernel {
            op: self.name.clone(),
            section: section.into(),
            err,
        })
    }

    /// Parses and stores a kernel body under its section key (`code`,
    /// `badcode`, `backcode`, `badbackcode`, `equivcpoffs`, `makecomp`,
    /// `redodims`, `redodimscode`).
    pub fn set_kernel(&mut self, section: &str, text: &str) -> Result<(), EngineError> {
        let ast = Some(self.parse_section(section, text)?);
        match section {
            "code" => self.code = ast,
            "badcode" => self.badcode = ast,
            "backcode" => self.flow.backcode = ast,
            "badbackcode" => self.flow.badbackcode = ast,
            "equivcpoffs" => self.flow.equivcpoffs = ast,
            "makecomp" => self.flow.makecomp = ast,
            "redodims" => self.flow.redodims = ast,
            "redodimscode" => self.redodimscode = ast,
            _ => {
                return Err(EngineError::KernelValidationError {
                    op: self.name.clone(),
                    msg: format!("unknown kernel section '{section}'"),
                })
            }
        }
        Ok(())
    }

    pub fn with_kernel(mut self, section: &str, text: &str) -> Result<OpDef, EngineError> {
        self.set_kernel(section, text)?;
        Ok(self)
    }

    pub fn with_otherpars(mut self, decls: &str) -> Result<OpDef, EngineError> {
        self.otherpars = parse_decls(decls)?;
        Ok(self)
    }

    pub fn with_generictypes(mut self, letters: &str) -> Result<OpDef, EngineError> {
        self.generictypes = GenericList::parse(letters)?;
        Ok(self)
    }

    pub fn with_handlebad(mut self, h: HandleBad) -> OpDef {
        self.handlebad = h;
        self
    }

    pub fn with_inplace(mut self, input: &str, output: &str) -> OpDef {
        self.inplace = Some((input.to_string(), output.to_string()));
        self
    }

    pub fn is_flow(&self) -> bool {
        self.flow.defaultflow
    }

    /// `$COMP` names visible to the kernels: otherpars, then comp fields.
    pub fn comp_names(&self) -> Vec<String> {
        self.otherpars.iter().chain(&self.flow.comp).map(|d| d.name.clone()).collect()
    }

    fn kernel_err(&self, section: &str, err: KernelError) -> EngineError {
        EngineError::Kernel { op: self.name.clone(), section: section.into(), err }
    }

    fn invalid(&self, msg: impl Into<String>) -> EngineError {
        EngineError::KernelValidationError { op: self.name.clone(), msg: msg.into() }
    }

    /// Elaborates one kernel section for a generic type.
    pub fn program(&self, section: &str, generic: Dtype) -> Result<Option<Program>, EngineError> {
        let (ast, ctx, variant) = match section {
            "code" => (&self.code, Context::Calc, Variant::Good),
            "badcode" => (&self.badcode, Context::Calc, Variant::Bad),
            "backcode" => (&self.flow.backcode, Context::Calc, Variant::Good),
            "badbackcode" => (&self.flow.badbackcode, Context::Calc, Variant::Bad),
            "redodimscode" => (&self.redodimscode, Context::RedoDims, Variant::Good),
            "makecomp" => (&self.flow.makecomp, Context::MakeComp, Variant::Good),
            "redodims" => (&self.flow.redodims, Context::FlowRedoDims, Variant::Good),
            "equivcpoffs" => (&self.flow.equivcpoffs, Context::EquivCpOffs, Variant::Good),
            _ => return Err(self.invalid(format!("unknown kernel section '{section}'"))),
        };
        let Some(ast) = ast else { return Ok(None) };
        let mut env = ElabEnv::new(&self.sig, ctx, generic, variant).with_comp(self.comp_names());
        if ctx == Context::MakeComp {
            env = env.with_bare(self.otherpars.iter().map(|d| d.name.clone()).collect());
        }
        elaborate(ast, &env).map(Some).map_err(|e| self.kernel_err(section, e))
    }

    /// Checks the definition and elaborates every kernel under every
    /// generic type it may run with.
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.handlebad == HandleBad::Handle && self.badcode.is_none() && self.flow.equivcpoffs.is_none() {
            return Err(self.invalid("HandleBad requires BadCode"));
        }
        if self.code.is_none() && self.flow.equivcpoffs.is_none() {
            return Err(self.invalid("no Code"));
        }
        if self.flow.reversible && self.flow.backcode.is_none() && self.flow.equivcpoffs.is_none() {
            return Err(self.invalid("Reversible requires BackCode or EquivCPOffsCode"));
        }
        if self.is_flow() {
            for p in ["PARENT", "CHILD"] {
                if self.sig.param(p).is_none() {
                    return Err(self.invalid("DefaultFlow needs PARENT and CHILD parameters or P2Child"));
                }
            }
        }
        if let Some((a, b)) = &self.inplace {
            let (Some(pa), Some(pb)) = (self.sig.param(a), self.sig.param(b)) else {
                return Err(self.invalid(format!("Inplace names unknown parameters '{a}', '{b}'")));
            };
            if !pa.is_input() || !(pb.flags.o || pb.flags.oca) {
                return Err(self.invalid("Inplace pair must be an input and an [o] output"));
            }
            if pa.dim_keys() != pb.dim_keys() {
                return Err(self.invalid(format!("Inplace parameters '{a}' and '{b}' have different dims")));
            }
        }
        let names = self.comp_names();
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(self.invalid(format!("'{n}' declared twice in OtherPars/Comp")));
            }
        }
        for &g in self.generictypes.types() {
            for s in [
                "code",
                "badcode",
                "backcode",
                "badbackcode",
                "redodimscode",
                "makecomp",
                "redodims",
                "equivcpoffs",
            ] {
                self.program(s, g)?;
            }
        }
        Ok(())
    }

    /// Checks supplied otherpars against the declarations; returns them in
    /// declaration order. Integers are accepted where numbers are declared.
    pub fn check_otherpars(&self, given: &OtherPars) -> Result<Vec<OtherValue>, EngineError> {
        for k in given.keys() {
            if !self.otherpars.iter().any(|d| &d.name == k) {
                return Err(EngineError::UnknownOtherPar(k.clone()));
            }
        }
        self.otherpars
            .iter()
            .map(|d| {
                let v = given.get(&d.name).ok_or_else(|| EngineError::MissingOtherPar(d.name.clone()))?;
                let mismatch = || EngineError::OtherParMismatch { name: d.name.clone(), expected: d.kind };
                Ok(match (d.kind, v) {
                    (OtherKind::Int, OtherValue::Int(_))
                    | (OtherKind::Float, OtherValue::Float(_))
                    | (OtherKind::Str, OtherValue::Str(_))
                    | (OtherKind::IntList, OtherValue::IntList(_))
                    | (OtherKind::FloatList, OtherValue::FloatList(_)) => v.clone(),
                    (OtherKind::Float, OtherValue::Int(i)) => OtherValue::Float(*i as f64),
                    (OtherKind::FloatList, OtherValue::IntList(l)) => {
                        OtherValue::FloatList(l.iter().map(|&x| x as f64).collect())
                    }
                    _ => return Err(mismatch()),
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub check_bounds: bool,
    pub reverse_sweep: bool,
}

/// Diagnostics from one kernel run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExecReport {
    pub tuples: usize,
    pub div_by_zero: u64,
}

/// Arrays bound to parameters by name.
#[derive(Debug, Clone, Default)]
pub struct CallArgs(BTreeMap<String, NdArray>);

impl CallArgs {
    pub fn new() -> CallArgs {
        CallArgs::default()
    }

    pub fn with(mut self, name: &str, a: NdArray) -> CallArgs {
        self.set(name, a);
        self
    }

    pub fn set(&mut self, name: &str, a: NdArray) {
        self.0.insert(name.to_string(), a);
    }

    pub fn get(&self, name: &str) -> Option<&NdArray> {
        self.0.get(name)
    }

    pub fn take(&mut self, name: &str) -> Option<NdArray> {
        self.0.remove(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.0.keys()
    }
}

/// Read-only description of one parameter's layout during a sweep.
struct Lane {
    slot: usize,
    base: isize,
    act_stride: Vec<isize>,
    act_size: Vec<i64>,
    thr_stride: Vec<isize>,
    dims: Vec<usize>,
    incs: Vec<isize>,
    dtype: Dtype,
    badval: Scalar,
}

struct CalcHost<'a> {
    bufs: Vec<Buffer>,
    lanes: Vec<Lane>,
    cur: Vec<isize>,
    sizes: Vec<i64>,
    thread_dims: Vec<usize>,
    ntuples: usize,
    state: Vec<bool>,
    comp: &'a [OtherValue],
    reverse: bool,
}

impl CalcHost<'_> {
    fn meta_lane(&self, param: usize, q: MetaQuery) -> Result<Scalar, ExecError> {
        let l = &self.lanes[param];
        meta_of(&l.dims, &l.incs, l.dtype, false, q)
    }
}

pub(crate) fn meta_of(dims: &[usize], incs: &[isize], dtype: Dtype, null: bool, q: MetaQuery) -> Result<Scalar, ExecError> {
    let pick = |i: i64, n: usize| {
        usize::try_from(i)
            .ok()
            .filter(|&i| i < n)
            .ok_or_else(|| ExecError::IndexOutOfBounds(format!("dims index {i} of {n}")))
    };
    Ok(Scalar::Int(match q {
        MetaQuery::Ndims => dims.len() as i64,
        MetaQuery::Dims(i) => dims[pick(i, dims.len())?] as i64,
        MetaQuery::Dimincs(i) => incs[pick(i, incs.len())?] as i64,
        MetaQuery::Datatype => dtype.rank() as i64,
        MetaQuery::Nvals => {
            if null {
                0
            } else {
                dims.iter().product::<usize>() as i64
            }
        }
    }))
}

impl Host for CalcHost<'_> {
    fn access_base(&self, param: usize) -> isize {
        self.cur[param]
    }
    fn active_size(&self, param: usize, k: usize) -> i64 {
        self.lanes[param].act_size[k]
    }
    fn active_stride(&self, param: usize, k: usize) -> isize {
        self.lanes[param].act_stride[k]
    }
    fn read(&self, param: usize, off: isize) -> Result<Scalar, ExecError> {
        let buf = &self.bufs[self.lanes[param].slot];
        match usize::try_from(off) {
            Ok(o) if o < buf.len() => Ok(buf.get(o)),
            _ => Err(ExecError::IndexOutOfBounds(format!("offset {off} in '{param}' storage of {}", buf.len()))),
        }
    }
    fn write(&mut self, param: usize, off: isize, v: Scalar) -> Result<Scalar, ExecError> {
        let buf = &mut self.bufs[self.lanes[param].slot];
        match usize::try_from(off) {
            Ok(o) if o < buf.len() => Ok(buf.set(o, v)),
            _ => Err(ExecError::IndexOutOfBounds(format!("offset {off} in storage of {}", buf.len()))),
        }
    }
    fn is_bad(&self, param: usize, v: Scalar) -> bool {
        v.same(self.lanes[param].badval)
    }
    fn bad_value(&self, param: usize) -> Scalar {
        self.lanes[param].badval
    }
    fn state_is_bad(&self, param: usize) -> bool {
        self.state[param]
    }
    fn state_set(&mut self, param: usize, bad: bool) {
        self.state[param] = bad;
    }
    fn size(&self, dim: usize) -> Result<i64, ExecError> {
        Ok(self.sizes[dim])
    }
    fn comp(&self, idx: usize) -> Result<Scalar, ExecError> {
        self.comp[idx].scalar()
    }
    fn comp_index(&self, idx: usize, i: i64) -> Result<Scalar, ExecError> {
        self.comp[idx].index(i)
    }
    fn meta(&self, param: usize, q: MetaQuery) -> Result<Scalar, ExecError> {
        self.meta_lane(param, q)
    }
    fn tuple_count(&self) -> usize {
        self.ntuples
    }
    fn select_tuple(&mut self, mut t: usize) {
        for (p, l) in self.lanes.iter().enumerate() {
            self.cur[p] = l.base;
        }
        for (j, &n) in self.thread_dims.iter().enumerate() {
            let i = (t % n) as isize;
            t /= n;
            for (p, l) in self.lanes.iter().enumerate() {
                self.cur[p] += i * l.thr_stride[j];
            }
        }
    }
    fn reverse_sweep(&self) -> bool {
        self.reverse
    }
}

/// Runs a calculation program over prepared arrays.
///
/// `arrays[i]` holds parameter `i` in its plan dtype; a parameter listed in
/// `alias` as `Some(j)` reads and writes `arrays[j]`'s storage instead.
/// `state` carries the bad flags in and out.
pub(crate) fn execute(
    prog: &Program,
    plan: &BroadcastPlan,
    arrays: &mut [NdArray],
    alias: &[Option<usize>],
    state: &mut Vec<bool>,
    comp: &[OtherValue],
    opts: &RunOptions,
) -> Result<ExecReport, EngineError> {
    let n = arrays.len();
    let mut bufs = Vec::with_capacity(n);
    let mut slot_of = vec![usize::MAX; n];
    for i in 0..n {
        if alias[i].is_none() {
            let buf = arrays[i].data_mut().map(|b| std::mem::replace(b, Buffer::filled(Dtype::Byte, 0, Scalar::Int(0))));
            let buf = buf.ok_or(ArrayError::NullArrayAccess)?;
            slot_of[i] = bufs.len();
            bufs.push(buf);
        }
    }
    let mut lanes = Vec::with_capacity(n);
    for i in 0..n {
        let src = alias[i].unwrap_or(i);
        let a = &arrays[src];
        let nact = plan.params[i].padded.len();
        let (act_stride, thr_stride) = strides_for(a.dims(), a.dimincs(), nact, &plan.thread_dims);
        let keys = &prog.param_dims[i];
        let badval = if alias[i].is_some() { arrays[src].badvalue() } else { arrays[i].badvalue() };
        lanes.push(Lane {
            slot: slot_of[src],
            base: a.offset() as isize,
            act_stride,
            act_size: keys.iter().map(|k| plan.dim_sizes[k] as i64).collect(),
            thr_stride: if prog.param_is_temp[i] { vec![0; plan.thread_dims.len()] } else { thr_stride },
            dims: a.dims().to_vec(),
            incs: a.dimincs().to_vec(),
            dtype: plan.params[i].dtype,
            badval,
        });
    }
    let ntuples = plan.ntuples();
    let mut host = CalcHost {
        bufs,
        cur: lanes.iter().map(|l| l.base).collect(),
        lanes,
        sizes: prog.dims.iter().map(|d| plan.dim_sizes.get(d).copied().unwrap_or(0) as i64).collect(),
        thread_dims: plan.thread_dims.clone(),
        ntuples,
        state: state.clone(),
        comp,
        reverse: opts.reverse_sweep,
    };
    let result = {
        let mut m = Machine::new(prog, &mut host, opts.check_bounds);
        let r = if prog.has_threadloop {
            if ntuples > 0 {
                m.host.select_tuple(0);
                m.run()
            } else {
                Ok(())
            }
        } else {
            let mut r = Ok(());
            for k in 0..ntuples {
                let t = if opts.reverse_sweep { ntuples - 1 - k } else { k };
                m.host.select_tuple(t);
                r = m.run();
                if r.is_err() {
                    break;
                }
            }
            r
        };
        r.map(|_| m.div_by_zero)
    };
    let CalcHost { bufs, state: end_state, .. } = host;
    let mut bufs: Vec<Option<Buffer>> = bufs.into_iter().map(Some).collect();
    for i in 0..n {
        if alias[i].is_none() {
            *arrays[i].data_mut().expect("taken above") = bufs[slot_of[i]].take().expect("one owner per slot");
        }
    }
    let div_by_zero = result?;
    *state = end_state;
    Ok(ExecReport { tuples: ntuples, div_by_zero })
}

struct RedoDimsHost<'a> {
    args: &'a [Option<&'a NdArray>],
    dims: &'a [String],
    sizes: BTreeMap<String, usize>,
    comp: &'a [OtherValue],
}

impl Host for RedoDimsHost<'_> {
    fn set_size(&mut self, dim: usize, v: i64) -> Result<(), ExecError> {
        self.sizes.insert(self.dims[dim].clone(), v as usize);
        Ok(())
    }
    fn comp(&self, idx: usize) -> Result<Scalar, ExecError> {
        self.comp[idx].scalar()
    }
    fn comp_index(&self, idx: usize, i: i64) -> Result<Scalar, ExecError> {
        self.comp[idx].index(i)
    }
    fn meta(&self, param: usize, q: MetaQuery) -> Result<Scalar, ExecError> {
        match self.args[param] {
            Some(a) => meta_of(a.dims(), a.dimincs(), a.dtype(), a.is_null(), q),
            None => meta_of(&[], &[], Dtype::Double, true, q),
        }
    }
}

/// The set of registered operators.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    ops: BTreeMap<String, Arc<OpDef>>,
}

const CORPUS: &str = include_str!("../../corpus/corpus.ops");

impl Registry {
    pub fn new() -> Registry {
        Registry::default()
    }

    /// A registry preloaded with the bundled operator corpus.
    pub fn with_corpus() -> Registry {
        let mut r = Registry::new();
        for def in crate::cli::opdef::parse_opdefs(CORPUS).expect("bundled corpus parses") {
            r.register_op(def).expect("bundled corpus registers");
        }
        r
    }

    pub fn register_op(&mut self, def: OpDef) -> Result<(), EngineError> {
        if self.ops.contains_key(&def.name) {
            return Err(EngineError::DuplicateOpName(def.name));
        }
        def.validate()?;
        self.ops.insert(def.name.clone(), Arc::new(def));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<Arc<OpDef>, EngineError> {
        self.ops.get(name).cloned().ok_or_else(|| EngineError::UnknownOp(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.ops.keys()
    }

    /// Positional call: `inputs` bind to the non-output parameters in
    /// signature order; all outputs are created.
    pub fn call(&self, name: &str, inputs: &[NdArray]) -> Result<Vec<NdArray>, EngineError> {
        self.call_with(name, inputs, &OtherPars::new())
    }

    pub fn call_with(&self, name: &str, inputs: &[NdArray], other: &OtherPars) -> Result<Vec<NdArray>, EngineError> {
        let def = self.get(name)?;
        let mut args = CallArgs::new();
        let mut it = inputs.iter();
        for p in def.sig.params.iter().filter(|p| p.is_input()) {
            if let Some(a) = it.next() {
                args.set(&p.name, a.clone());
            }
        }
        self.run_op(name, &mut args, other, &RunOptions::default())
    }

    pub fn run_op(
        &self,
        name: &str,
        args: &mut CallArgs,
        other: &OtherPars,
        opts: &RunOptions,
    ) -> Result<Vec<NdArray>, EngineError> {
        self.run_op_report(name, args, other, opts).map(|(o, _)| o)
    }

    /// Resolves the plan a call would run with, without running it.
    pub fn plan(&self, name: &str, args: &CallArgs, other: &OtherPars) -> Result<BroadcastPlan, EngineError> {
        let def = self.get(name)?;
        let other = def.check_otherpars(other)?;
        let refs = arg_refs(&def.sig, args, None);
        let overrides = run_redodims(&def, &refs, &other)?;
        make_plan(&def.sig, &def.generictypes, &refs, &overrides)
    }

    pub fn run_op_report(
        &self,
        name: &str,
        args: &mut CallArgs,
        other: &OtherPars,
        opts: &RunOptions,
    ) -> Result<(Vec<NdArray>, ExecReport), EngineError> {
        let def = self.get(name)?;
        let other = def.check_otherpars(other)?;
        let sig = &def.sig;
        for n in args.names() {
            if sig.index_of(n).is_none() {
                return Err(EngineError::UnknownArg(n.clone()));
            }
        }
        let roles: Vec<Role> = (0..sig.params.len()).map(|i| role_of(sig, i)).collect();
        for (i, p) in sig.params.iter().enumerate() {
            let a = args.get(&p.name);
            match roles[i] {
                Role::Input | Role::InOut => match a {
                    None => return Err(EngineError::MissingInput(p.name.clone())),
                    Some(a) if a.is_null() => return Err(EngineError::NullInput(p.name.clone())),
                    _ => {}
                },
                Role::Temp if a.is_some() => return Err(EngineError::SuppliedTemp(p.name.clone())),
                Role::Output if p.flags.oca && a.is_some() => {
                    return Err(EngineError::SuppliedOcaParam(p.name.clone()))
                }
                Role::Output if p.flags.nc && a.is_none_or(NdArray::is_null) => {
                    return Err(EngineError::MissingNcOutput(p.name.clone()))
                }
                _ => {}
            }
        }

        let inplace = def.inplace.as_ref().and_then(|(a, b)| {
            let input = args.get(a)?;
            input.is_inplace().then(|| (sig.index_of(a).expect("validated"), sig.index_of(b).expect("validated")))
        });

        let inputs: Vec<usize> = (0..roles.len()).filter(|&i| matches!(roles[i], Role::Input | Role::InOut)).collect();
        let first_bad = inputs.iter().copied().find(|&i| args.get(&sig.params[i].name).is_some_and(NdArray::badflag));
        let any_bad = first_bad.is_some();
        let (variant_section, code) = match (def.handlebad, first_bad) {
            (HandleBad::Forbid, Some(i)) => {
                return Err(EngineError::BadValuesForbidden { op: def.name.clone(), param: sig.params[i].name.clone() })
            }
            (HandleBad::Handle, Some(_)) => ("badcode", &def.badcode),
            _ => ("code", &def.code),
        };
        if code.is_none() {
            return Err(EngineError::NoCalcCode(def.name.clone()));
        }

        let refs = arg_refs(sig, args, inplace.map(|(_, o)| o));
        let overrides = run_redodims(&def, &refs, &other)?;
        let plan = make_plan(sig, &def.generictypes, &refs, &overrides)?;
        if let Some((ii, oi)) = inplace {
            let input = &sig.params[ii].name;
            let got = args.get(input).expect("checked").dims().to_vec();
            if got != plan.params[oi].dims {
                return Err(EngineError::InplaceShapeMismatch {
                    input: input.clone(),
                    expected: plan.params[oi].dims.clone(),
                    got,
                });
            }
            if plan.params[ii].dtype != plan.params[oi].dtype {
                return Err(EngineError::InplaceTypeMismatch {
                    input: input.clone(),
                    a: plan.params[ii].dtype,
                    b: plan.params[oi].dtype,
                });
            }
        }
        let prog = def.program(variant_section, plan.generic)?.expect("code present");

        let n = sig.params.len();
        let mut arrays = Vec::with_capacity(n);
        let mut alias = vec![None; n];
        let mut state = vec![false; n];
        let out_flag = def.handlebad == HandleBad::Ignore && any_bad;
        for (i, p) in sig.params.iter().enumerate() {
            let pp = &plan.params[i];
            let arr = match roles[i] {
                Role::Input | Role::InOut => {
                    let a = args.get(&p.name).expect("checked");
                    state[i] = a.badflag() || (roles[i] == Role::InOut && out_flag);
                    a.convert_dtype(pp.dtype)
                }
                Role::Output if inplace.is_some_and(|(_, o)| o == i) => {
                    alias[i] = inplace.map(|(ii, _)| ii);
                    state[i] = out_flag;
                    NdArray::null()
                }
                Role::Output => {
                    state[i] = out_flag;
                    match args.get(&p.name).filter(|a| !a.is_null()) {
                        Some(a) => a.convert_dtype(pp.dtype),
                        None => NdArray::zeros(pp.dtype, &pp.dims),
                    }
                }
                Role::Temp => NdArray::zeros(pp.dtype, &pp.dims),
            };
            arrays.push(arr);
        }
        let report = execute(&prog, &plan, &mut arrays, &alias, &mut state, &other, &RunOptions {
            check_bounds: opts.check_bounds || def.boundscheck,
            ..*opts
        })?;

        let mut outputs = Vec::new();
        for (i, p) in sig.params.iter().enumerate() {
            match roles[i] {
                Role::Output | Role::InOut => {}
                _ => continue,
            }
            let original = args.get(&p.name).filter(|a| !a.is_null()).map(NdArray::dtype);
            let mut out = match alias[i] {
                Some(src) => {
                    let input = &sig.params[src].name;
                    let orig = args.get(input).expect("checked").dtype();
                    let mut a = arrays[src].convert_dtype(orig);
                    a.set_badflag(state[i]);
                    a.set_inplace(false);
                    args.set(input, a.clone());
                    a
                }
                None => {
                    let mut a = match original {
                        Some(t) if t != arrays[i].dtype() => arrays[i].convert_dtype(t),
                        _ => std::mem::replace(&mut arrays[i], NdArray::null()),
                    };
                    a.set_badflag(state[i]);
                    a
                }
            };
            out.set_inplace(false);
            args.set(&p.name, out.clone());
            outputs.push(out);
        }
        Ok((outputs, report))
    }
}

fn arg_refs<'a>(sig: &Signature, args: &'a CallArgs, skip: Option<usize>) -> Vec<Option<&'a NdArray>> {
    sig.params
        .iter()
        .enumerate()
        .map(|(i, p)| if Some(i) == skip { None } else { args.get(&p.name).filter(|a| !a.is_null()) })
        .collect()
}

fn run_redodims(
    def: &OpDef,
    refs: &[Option<&NdArray>],
    other: &[OtherValue],
) -> Result<BTreeMap<String, usize>, EngineError> {
    if def.redodimscode.is_none() {
        return Ok(BTreeMap::new());
    }
    let dtypes: Vec<Option<Dtype>> = refs
        .iter()
        .enumerate()
        .map(|(i, a)| if def.sig.params[i].is_temp() { None } else { a.map(NdArray::dtype) })
        .collect();
    let generic = resolve_generic(&def.sig, &dtypes, &def.generictypes)?;
    let prog = def.program("redodimscode", generic)?.expect("present");
    let mut host = RedoDimsHost { args: refs, dims: &prog.dims, sizes: BTreeMap::new(), comp: other };
    Machine::new(&prog, &mut host, true).run()?;
    Ok(host.sizes)
}
