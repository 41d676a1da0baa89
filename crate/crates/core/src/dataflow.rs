//! Parent/child links between arrays.
//!
//! A [`Flow`] owns a set of arrays and the trans objects linking them. A
//! child computed by a kernel is refreshed lazily: writes to the parent only
//! flag it, and the forward kernel runs when the child is next read. Writes
//! to a child flow back to the parent immediately when the link is
//! reversible. Affine children share their parent's buffer.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::engine::interp::{ExecError, Host, Machine, MetaQuery};
use crate::engine::{
    execute, make_plan, meta_of, EngineError, HandleBad, OpDef, OtherKind, OtherPars, OtherValue, Registry,
    RunOptions,
};
use crate::ndarray::{default_badvalue, ArrayError, Buffer, Dtype, NdArray, Scalar, StateFlags};
use crate::typesys::resolve_generic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TransId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ArrayId(pub usize);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Array(#[from] ArrayError),
    #[error("'{0}' is not a dataflow operator")]
    NotDataflow(String),
    #[error("{0}: redodims finished without $SETDIMS()")]
    MissingRedoDimsMetadata(String),
    #[error("writing this array needs back-flow through '{0}', which is not reversible")]
    IrreversibleWrite(String),
    #[error("slice of dim {dim}: {detail}")]
    SliceOutOfRange { dim: usize, detail: String },
    #[error("slice of dim {0} has step 0")]
    ZeroStep(usize),
    #[error("slice gives {got} specs for {expected} dims")]
    SliceArity { expected: usize, got: usize },
    #[error("no array with id {0}")]
    UnknownArray(usize),
}

/// One dim of an affine slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SliceSpec {
    /// Keep the whole dim.
    All,
    /// Fix the dim at one index and drop it.
    Index(usize),
    /// `start` to `end` inclusive in steps of `step` (which may be negative).
    Range { start: usize, end: usize, step: isize },
}

/// Child layout as a function of the parent's layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AffineMap {
    /// (parent dim, start index) terms of the child's offset.
    pub starts: Vec<(usize, usize)>,
    /// Per child dim: (parent dim, step, size).
    pub dims: Vec<(usize, isize, usize)>,
}

impl AffineMap {
    fn layout(&self, parent_off: usize, parent_incs: &[isize]) -> (usize, Vec<isize>) {
        let off = parent_off as isize + self.starts.iter().map(|&(d, s)| s as isize * parent_incs[d]).sum::<isize>();
        let incs = self.dims.iter().map(|&(d, step, _)| step * parent_incs[d]).collect();
        (off as usize, incs)
    }
}

#[derive(Debug, Clone)]
pub struct Trans {
    /// `None` for affine slices.
    pub op: Option<Arc<OpDef>>,
    pub parent: ArrayId,
    pub child: ArrayId,
    /// Values for `op.comp_names()`, in order.
    pub comp: Vec<OtherValue>,
    pub reversible: bool,
    pub affine: Option<AffineMap>,
}

impl Trans {
    fn name(&self) -> String {
        self.op.as_ref().map_or_else(|| "slice".to_string(), |o| o.name.clone())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FlowStats {
    /// Forward kernel or offset-pair runs.
    pub kernel_runs: u64,
    /// Back-flow kernel or offset-pair runs.
    pub back_runs: u64,
    /// Elements copied out of shared storage into owned buffers.
    pub copies: u64,
}

/// An arena of arrays and the links between them.
#[derive(Debug, Default)]
pub struct Flow {
    arrays: Vec<NdArray>,
    trans: Vec<Option<Trans>>,
    stats: FlowStats,
    pub options: RunOptions,
}

/// Read access to a physical array; views read through shared storage.
pub struct View<'a> {
    header: &'a NdArray,
    buf: &'a Buffer,
}

impl View<'_> {
    pub fn dims(&self) -> &[usize] {
        self.header.dims()
    }

    pub fn header(&self) -> &NdArray {
        self.header
    }

    pub fn at(&self, idx: &[usize]) -> Result<Scalar, ArrayError> {
        Ok(self.buf.get(self.header.offset_of(idx, true)?))
    }

    pub fn values(&self) -> Vec<Scalar> {
        self.header.element_offsets().into_iter().map(|o| self.buf.get(o)).collect()
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.values().into_iter().map(Scalar::as_f64).collect()
    }

    /// Identity of the underlying buffer.
    pub fn storage_ptr(&self) -> *const Buffer {
        self.buf as *const Buffer
    }
}

fn comp_default(kind: OtherKind) -> OtherValue {
    match kind {
        OtherKind::Int => OtherValue::Int(0),
        OtherKind::Float => OtherValue::Float(0.0),
        OtherKind::Str => OtherValue::Str(String::new()),
        OtherKind::IntList => OtherValue::IntList(Vec::new()),
        OtherKind::FloatList => OtherValue::FloatList(Vec::new()),
    }
}

fn comp_scalar(v: &OtherValue) -> Result<Scalar, ExecError> {
    match v {
        OtherValue::Int(i) => Ok(Scalar::Int(*i)),
        OtherValue::Float(f) => Ok(Scalar::Float(*f)),
        _ => Err(ExecError::Invalid("list or string value used as a number".into())),
    }
}

fn comp_index(v: &OtherValue, i: i64) -> Result<Scalar, ExecError> {
    let oob = || ExecError::IndexOutOfBounds(format!("list index {i}"));
    let i = usize::try_from(i).map_err(|_| oob())?;
    match v {
        OtherValue::IntList(l) => l.get(i).map(|&x| Scalar::Int(x)).ok_or_else(oob),
        OtherValue::FloatList(l) => l.get(i).map(|&x| Scalar::Float(x)).ok_or_else(oob),
        _ => Err(ExecError::Invalid("indexing a value that is not a list".into())),
    }
}

fn comp_store(slot: &mut OtherValue, v: Scalar) -> Result<(), ExecError> {
    match slot {
        OtherValue::Int(x) => *x = v.trunc_i64(),
        OtherValue::Float(x) => *x = v.as_f64(),
        _ => return Err(ExecError::Invalid("assigning a number to a list or string".into())),
    }
    Ok(())
}

fn comp_store_index(slot: &mut OtherValue, i: i64, v: Scalar) -> Result<(), ExecError> {
    let i = usize::try_from(i).map_err(|_| ExecError::IndexOutOfBounds(format!("list index {i}")))?;
    match slot {
        OtherValue::IntList(l) => {
            if l.len() <= i {
                l.resize(i + 1, 0);
            }
            l[i] = v.trunc_i64();
        }
        OtherValue::FloatList(l) => {
            if l.len() <= i {
                l.resize(i + 1, 0.0);
            }
            l[i] = v.as_f64();
        }
        _ => return Err(ExecError::Invalid("indexing a value that is not a list".into())),
    }
    Ok(())
}

struct MakeCompHost<'a> {
    comp: &'a mut Vec<OtherValue>,
    bare: &'a [OtherValue],
}

impl Host for MakeCompHost<'_> {
    fn comp(&self, idx: usize) -> Result<Scalar, ExecError> {
        comp_scalar(&self.comp[idx])
    }
    fn comp_index(&self, idx: usize, i: i64) -> Result<Scalar, ExecError> {
        comp_index(&self.comp[idx], i)
    }
    fn set_comp(&mut self, idx: usize, v: Scalar) -> Result<(), ExecError> {
        comp_store(&mut self.comp[idx], v)
    }
    fn set_comp_index(&mut self, idx: usize, i: i64, v: Scalar) -> Result<(), ExecError> {
        comp_store_index(&mut self.comp[idx], i, v)
    }
    fn bare(&self, idx: usize) -> Result<Scalar, ExecError> {
        comp_scalar(&self.bare[idx])
    }
    fn bare_index(&self, idx: usize, i: i64) -> Result<Scalar, ExecError> {
        comp_index(&self.bare[idx], i)
    }
}

/// Child shape under construction during dataflow redodims.
struct RedoHost<'a> {
    parent: &'a NdArray,
    parent_idx: usize,
    comp: &'a [OtherValue],
    dims: Vec<usize>,
    incs: Vec<isize>,
    dtype: Dtype,
    set_dims: bool,
}

impl Host for RedoHost<'_> {
    fn comp(&self, idx: usize) -> Result<Scalar, ExecError> {
        comp_scalar(&self.comp[idx])
    }
    fn comp_index(&self, idx: usize, i: i64) -> Result<Scalar, ExecError> {
        comp_index(&self.comp[idx], i)
    }
    fn meta(&self, param: usize, q: MetaQuery) -> Result<Scalar, ExecError> {
        if param == self.parent_idx {
            let p = self.parent;
            meta_of(p.dims(), p.dimincs(), p.dtype(), p.is_null(), q)
        } else {
            meta_of(&self.dims, &self.incs, self.dtype, false, q)
        }
    }
    fn set_meta(&mut self, param: usize, q: MetaQuery, v: i64) -> Result<(), ExecError> {
        if param == self.parent_idx {
            return Err(ExecError::Invalid("PARENT is read-only".into()));
        }
        let slot = |i: i64, n: usize| {
            usize::try_from(i)
                .ok()
                .filter(|&i| i < n)
                .ok_or_else(|| ExecError::IndexOutOfBounds(format!("CHILD dims index {i} of {n}")))
        };
        match q {
            MetaQuery::Dims(i) => {
                let i = slot(i, self.dims.len())?;
                self.dims[i] = usize::try_from(v).map_err(|_| ExecError::Invalid(format!("negative child dim {v}")))?;
            }
            MetaQuery::Dimincs(i) => {
                let i = slot(i, self.incs.len())?;
                self.incs[i] = v as isize;
            }
            MetaQuery::Datatype => {
                self.dtype = usize::try_from(v)
                    .ok()
                    .and_then(Dtype::from_rank)
                    .ok_or_else(|| ExecError::Invalid(format!("no datatype numbered {v}")))?;
            }
            MetaQuery::Ndims | MetaQuery::Nvals => return Err(ExecError::Invalid("use $SETNDIMS".into())),
        }
        Ok(())
    }
    fn set_ndims(&mut self, n: i64) -> Result<(), ExecError> {
        let n = usize::try_from(n).map_err(|_| ExecError::Invalid(format!("negative ndims {n}")))?;
        self.dims.resize(n, 1);
        self.incs.resize(n, 0);
        Ok(())
    }
    fn set_dims(&mut self) -> Result<(), ExecError> {
        self.set_dims = true;
        Ok(())
    }
}

/// Offset-pair copying in one direction.
struct EquivHost<'a> {
    parent: &'a NdArray,
    parent_buf: &'a mut Buffer,
    child: &'a NdArray,
    child_buf: &'a mut Buffer,
    parent_idx: usize,
    comp: &'a [OtherValue],
    forward: bool,
    oob_fill: Scalar,
    filled_oob: bool,
}

impl Host for EquivHost<'_> {
    fn comp(&self, idx: usize) -> Result<Scalar, ExecError> {
        comp_scalar(&self.comp[idx])
    }
    fn comp_index(&self, idx: usize, i: i64) -> Result<Scalar, ExecError> {
        comp_index(&self.comp[idx], i)
    }
    fn meta(&self, param: usize, q: MetaQuery) -> Result<Scalar, ExecError> {
        let a = if param == self.parent_idx { self.parent } else { self.child };
        meta_of(a.dims(), a.dimincs(), a.dtype(), a.is_null(), q)
    }
    fn equiv_cp(&mut self, pi: i64, ci: i64, oob: bool) -> Result<(), ExecError> {
        let ci = usize::try_from(ci)
            .ok()
            .filter(|&c| c < self.child_buf.len())
            .ok_or_else(|| ExecError::IndexOutOfBounds(format!("child offset {ci}")))?;
        if oob {
            if self.forward {
                self.child_buf.set(ci, self.oob_fill);
                self.filled_oob = true;
            }
            return Ok(());
        }
        let p = self.parent.offset() as i64 + pi;
        let p = usize::try_from(p)
            .ok()
            .filter(|&p| p < self.parent_buf.len())
            .ok_or_else(|| ExecError::IndexOutOfBounds(format!("parent offset {pi}")))?;
        if self.forward {
            self.child_buf.set(ci, self.parent_buf.get(p));
        } else {
            self.parent_buf.set(p, self.child_buf.get(ci));
        }
        Ok(())
    }
}

fn empty_buffer() -> Buffer {
    Buffer::filled(Dtype::Byte, 0, Scalar::Int(0))
}

impl Flow {
    pub fn new() -> Flow {
        Flow::default()
    }

    pub fn insert(&mut self, a: NdArray) -> ArrayId {
        let mut a = a.to_dense();
        a.state_mut().remove(StateFlags::ANYCHANGED | StateFlags::DATAFLOW_ANY);
        self.arrays.push(a);
        ArrayId(self.arrays.len() - 1)
    }

    fn arr(&self, id: ArrayId) -> Result<&NdArray, FlowError> {
        self.arrays.get(id.0).ok_or(FlowError::UnknownArray(id.0))
    }

    /// The stored header; for views its data lives in an ancestor.
    pub fn header(&self, id: ArrayId) -> Result<&NdArray, FlowError> {
        self.arr(id)
    }

    pub fn trans(&self, t: TransId) -> Option<&Trans> {
        self.trans.get(t.0).and_then(Option::as_ref)
    }

    pub fn parent_trans(&self, id: ArrayId) -> Option<&Trans> {
        self.arrays.get(id.0)?.trans_parent.and_then(|t| self.trans(t))
    }

    pub fn stats(&self) -> FlowStats {
        self.stats
    }

    /// The array owning `id`'s storage.
    fn root(&self, mut id: ArrayId) -> ArrayId {
        while self.arrays[id.0].data().is_none() {
            match self.parent_trans(id) {
                Some(t) if t.affine.is_some() => id = t.parent,
                _ => break,
            }
        }
        id
    }

    pub fn shares_storage(&self, a: ArrayId, b: ArrayId) -> bool {
        self.root(a) == self.root(b)
    }

    fn buffer(&self, id: ArrayId) -> &Buffer {
        self.arrays[self.root(id).0].data().expect("root owns storage")
    }

    fn take_buffer(&mut self, id: ArrayId) -> Buffer {
        let r = self.root(id);
        std::mem::replace(self.arrays[r.0].data_mut().expect("root owns storage"), empty_buffer())
    }

    fn put_buffer(&mut self, id: ArrayId, buf: Buffer) {
        let r = self.root(id);
        *self.arrays[r.0].data_mut().expect("root owns storage") = buf;
    }

    /// Dense copy of `id`'s current elements.
    fn dense(&mut self, id: ArrayId) -> NdArray {
        let a = &self.arrays[id.0];
        if a.data().is_some() {
            return a.to_dense();
        }
        let d = a.materialize_from(self.buffer(id));
        self.stats.copies += d.nvals() as u64;
        d
    }

    /// Writes `src`'s elements (cast) into `id`'s storage.
    fn write_all(&mut self, id: ArrayId, src: &NdArray) {
        let offs = self.arrays[id.0].element_offsets();
        let vals = src.values();
        let r = self.root(id);
        let buf = self.arrays[r.0].data_mut().expect("root owns storage");
        for (o, v) in offs.into_iter().zip(vals) {
            buf.set(o, v);
        }
    }

    /// Creates a linked child of `parent` through dataflow operator `op`.
    pub fn connect(&mut self, reg: &Registry, op: &str, parent: ArrayId, other: &OtherPars) -> Result<ArrayId, FlowError> {
        let def = reg.get(op)?;
        self.connect_def(def, parent, other)
    }

    pub fn connect_def(&mut self, def: Arc<OpDef>, parent: ArrayId, other: &OtherPars) -> Result<ArrayId, FlowError> {
        if !def.is_flow() {
            return Err(FlowError::NotDataflow(def.name.clone()));
        }
        self.arr(parent)?;
        let given = def.check_otherpars(other)?;
        let mut comp: Vec<OtherValue> = given.clone();
        comp.extend(def.flow.comp.iter().map(|d| comp_default(d.kind)));

        let pidx = def.sig.index_of("PARENT").expect("validated");
        let mut dtypes = vec![None; def.sig.params.len()];
        dtypes[pidx] = Some(self.arrays[parent.0].dtype());
        let generic = resolve_generic(&def.sig, &dtypes, &def.generictypes).map_err(EngineError::from)?;

        if let Some(prog) = def.program("makecomp", generic)? {
            let mut host = MakeCompHost { comp: &mut comp, bare: &given };
            Machine::new(&prog, &mut host, true).run()?;
        }

        let pheader = self.arrays[parent.0].clone();
        let (dims, dtype) = match def.program("redodims", generic)? {
            Some(prog) => {
                let mut host = RedoHost {
                    parent: &pheader,
                    parent_idx: pidx,
                    comp: &comp,
                    dims: Vec::new(),
                    incs: Vec::new(),
                    dtype: pheader.dtype(),
                    set_dims: false,
                };
                Machine::new(&prog, &mut host, true).run()?;
                if !host.set_dims {
                    return Err(FlowError::MissingRedoDimsMetadata(def.name.clone()));
                }
                (host.dims, host.dtype)
            }
            None => (pheader.dims().to_vec(), pheader.dtype()),
        };

        let mut child = NdArray::zeros(dtype, &dims);
        let tid = TransId(self.trans.len());
        child.trans_parent = Some(tid);
        child.state_mut().insert(StateFlags::PARENTDATACHANGED | StateFlags::PARENTDIMSCHANGED);
        if def.flow.reversible {
            child.state_mut().insert(StateFlags::DATAFLOW_B);
        }
        self.arrays.push(child);
        let cid = ArrayId(self.arrays.len() - 1);
        let p = &mut self.arrays[parent.0];
        p.trans_children.push(tid);
        p.state_mut().insert(StateFlags::DATAFLOW_F);
        self.trans.push(Some(Trans {
            reversible: def.flow.reversible,
            op: Some(def),
            parent,
            child: cid,
            comp,
            affine: None,
        }));
        Ok(cid)
    }

    /// A zero-copy view of `parent` selecting per-dim ranges.
    pub fn slice_affine(&mut self, parent: ArrayId, spec: &[SliceSpec]) -> Result<ArrayId, FlowError> {
        let p = self.arr(parent)?;
        if spec.len() != p.ndims() {
            return Err(FlowError::SliceArity { expected: p.ndims(), got: spec.len() });
        }
        let mut map = AffineMap { starts: Vec::new(), dims: Vec::new() };
        for (k, s) in spec.iter().enumerate() {
            let n = p.dims()[k];
            let oob = |i: usize| FlowError::SliceOutOfRange { dim: k, detail: format!("index {i} outside size {n}") };
            match *s {
                SliceSpec::All => map.dims.push((k, 1, n)),
                SliceSpec::Index(i) => {
                    if i >= n {
                        return Err(oob(i));
                    }
                    map.starts.push((k, i));
                }
                SliceSpec::Range { start, end, step } => {
                    if step == 0 {
                        return Err(FlowError::ZeroStep(k));
                    }
                    for i in [start, end] {
                        if i >= n {
                            return Err(oob(i));
                        }
                    }
                    let span = end as isize - start as isize;
                    if span != 0 && (span < 0) != (step < 0) {
                        return Err(FlowError::SliceOutOfRange {
                            dim: k,
                            detail: format!("step {step} does not lead from {start} to {end}"),
                        });
                    }
                    map.starts.push((k, start));
                    map.dims.push((k, step, (span / step) as usize + 1));
                }
            }
        }
        let (off, incs) = map.layout(p.offset(), p.dimincs());
        let dims: Vec<usize> = map.dims.iter().map(|d| d.2).collect();
        let mut child = NdArray::view_header(p.dtype(), dims, incs, off);
        child.set_badflag(p.badflag());
        child.set_badvalue_override(p.badvalue_override());
        let tid = TransId(self.trans.len());
        child.trans_parent = Some(tid);
        child.state_mut().insert(StateFlags::DATAFLOW_B);
        self.arrays.push(child);
        let cid = ArrayId(self.arrays.len() - 1);
        let p = &mut self.arrays[parent.0];
        p.trans_children.push(tid);
        p.state_mut().insert(StateFlags::DATAFLOW_F);
        self.trans.push(Some(Trans { op: None, parent, child: cid, comp: Vec::new(), reversible: true, affine: Some(map) }));
        Ok(cid)
    }

    /// Brings `id` up to date with its ancestors.
    pub fn make_physical(&mut self, id: ArrayId) -> Result<(), FlowError> {
        self.arr(id)?;
        let Some(tid) = self.arrays[id.0].trans_parent else {
            self.arrays[id.0].state_mut().remove(StateFlags::ANYCHANGED);
            return Ok(());
        };
        let t = self.trans(tid).expect("live trans").clone();
        // A view's data is its ancestor's, so that must be current even when
        // the view itself carries no change flags.
        if t.affine.is_none() && !self.arrays[id.0].state().intersects(StateFlags::ANYCHANGED) {
            return Ok(());
        }
        self.make_physical(t.parent)?;
        if t.affine.is_none() {
            self.flow_forward(&t)?;
            self.stats.kernel_runs += 1;
        } else {
            let flag = self.arrays[t.parent.0].badflag();
            self.arrays[id.0].set_badflag(flag);
        }
        self.arrays[id.0].state_mut().remove(StateFlags::ANYCHANGED);
        Ok(())
    }

    fn flow_forward(&mut self, t: &Trans) -> Result<(), FlowError> {
        let def = t.op.as_ref().expect("code trans");
        let parent_bad = self.arrays[t.parent.0].badflag();
        if def.flow.equivcpoffs.is_some() {
            return self.equiv_flow(t, true);
        }
        let section = if def.handlebad == HandleBad::Handle && parent_bad { "badcode" } else { "code" };
        self.code_flow(t, section, true)
    }

    fn flow_backward(&mut self, t: &Trans) -> Result<(), FlowError> {
        let def = t.op.as_ref().expect("code trans");
        if def.flow.equivcpoffs.is_some() {
            return self.equiv_flow(t, false);
        }
        let child_bad = self.arrays[t.child.0].badflag();
        let section = if def.handlebad == HandleBad::Handle && child_bad && def.flow.badbackcode.is_some() {
            "badbackcode"
        } else {
            "backcode"
        };
        self.code_flow(t, section, false)
    }

    fn code_flow(&mut self, t: &Trans, section: &str, forward: bool) -> Result<(), FlowError> {
        let def = t.op.as_ref().expect("code trans").clone();
        let pidx = def.sig.index_of("PARENT").expect("validated");
        let cidx = def.sig.index_of("CHILD").expect("validated");
        let pdense = self.dense(t.parent);
        let cdense = self.dense(t.child);
        let mut refs = vec![None; def.sig.params.len()];
        refs[pidx] = Some(&pdense);
        refs[cidx] = Some(&cdense);
        let plan = make_plan(&def.sig, &def.generictypes, &refs, &BTreeMap::new())?;
        let prog = def.program(section, plan.generic)?.ok_or_else(|| EngineError::NoCalcCode(def.name.clone()))?;
        let mut arrays: Vec<NdArray> = Vec::with_capacity(def.sig.params.len());
        let mut state = vec![false; def.sig.params.len()];
        for (i, pp) in plan.params.iter().enumerate() {
            arrays.push(if i == pidx {
                state[i] = pdense.badflag();
                pdense.convert_dtype(pp.dtype)
            } else if i == cidx {
                state[i] = if forward {
                    def.handlebad == HandleBad::Ignore && pdense.badflag()
                } else {
                    cdense.badflag()
                };
                cdense.convert_dtype(pp.dtype)
            } else {
                NdArray::zeros(pp.dtype, &pp.dims)
            });
        }
        if !forward {
            state[pidx] = def.handlebad == HandleBad::Ignore && cdense.badflag();
        }
        let alias = vec![None; arrays.len()];
        execute(&prog, &plan, &mut arrays, &alias, &mut state, &t.comp, &self.options)?;
        let (dst, idx) = if forward { (t.child, cidx) } else { (t.parent, pidx) };
        let dtype = self.arrays[dst.0].dtype();
        let out = arrays[idx].convert_dtype(dtype);
        self.write_all(dst, &out);
        self.arrays[dst.0].set_badflag(state[idx]);
        Ok(())
    }

    fn equiv_flow(&mut self, t: &Trans, forward: bool) -> Result<(), FlowError> {
        let def = t.op.as_ref().expect("code trans").clone();
        let prog = def.program("equivcpoffs", self.arrays[t.parent.0].dtype())?;
        let prog = match prog {
            Some(p) => p,
            None => def.program("equivcpoffs", def.generictypes.types()[0])?.expect("present"),
        };
        let pidx = def.sig.index_of("PARENT").expect("validated");
        let handle = def.handlebad == HandleBad::Handle;
        let child_dtype = self.arrays[t.child.0].dtype();
        let oob_fill = if handle {
            self.arrays[t.child.0].badvalue_override().unwrap_or_else(|| default_badvalue(child_dtype))
        } else {
            Scalar::Int(0)
        };
        let mut pbuf = self.take_buffer(t.parent);
        let mut cbuf = self.take_buffer(t.child);
        let pheader = self.arrays[t.parent.0].clone();
        let cheader = self.arrays[t.child.0].clone();
        let (res, filled) = {
            let mut host = EquivHost {
                parent: &pheader,
                parent_buf: &mut pbuf,
                child: &cheader,
                child_buf: &mut cbuf,
                parent_idx: pidx,
                comp: &t.comp,
                forward,
                oob_fill,
                filled_oob: false,
            };
            let r = Machine::new(&prog, &mut host, self.options.check_bounds).run();
            (r, host.filled_oob)
        };
        self.put_buffer(t.child, cbuf);
        self.put_buffer(t.parent, pbuf);
        res?;
        if forward {
            let flag = pheader.badflag() || (handle && filled);
            self.arrays[t.child.0].set_badflag(flag);
        } else if cheader.badflag() {
            self.arrays[t.parent.0].set_badflag(true);
        }
        Ok(())
    }

    fn mark_descendants(&mut self, id: ArrayId, skip: Option<TransId>) {
        let kids = self.arrays[id.0].trans_children.clone();
        for tid in kids {
            if Some(tid) == skip {
                continue;
            }
            let Some(t) = self.trans(tid) else { continue };
            let c = t.child;
            self.arrays[c.0].state_mut().insert(StateFlags::PARENTDATACHANGED);
            self.mark_descendants(c, None);
        }
    }

    fn check_writable(&self, mut id: ArrayId) -> Result<(), FlowError> {
        while let Some(t) = self.parent_trans(id) {
            if !t.reversible {
                return Err(FlowError::IrreversibleWrite(t.name()));
            }
            id = t.parent;
        }
        Ok(())
    }

    /// Propagates an in-place change of `id`: descendants are flagged, and
    /// data flows back through reversible links at once.
    pub fn mark_changed(&mut self, id: ArrayId) -> Result<(), FlowError> {
        self.arr(id)?;
        self.check_writable(id)?;
        self.mark_descendants(id, None);
        let mut cur = id;
        while let Some(tid) = self.arrays[cur.0].trans_parent {
            let t = self.trans(tid).expect("live trans").clone();
            if t.affine.is_none() {
                self.flow_backward(&t)?;
                self.stats.back_runs += 1;
            }
            self.mark_descendants(t.parent, Some(tid));
            cur = t.parent;
        }
        Ok(())
    }

    /// Physical read access.
    pub fn view(&mut self, id: ArrayId) -> Result<View<'_>, FlowError> {
        self.make_physical(id)?;
        Ok(View { header: &self.arrays[id.0], buf: self.buffer(id) })
    }

    /// Dense snapshot of the current values.
    pub fn read(&mut self, id: ArrayId) -> Result<NdArray, FlowError> {
        self.make_physical(id)?;
        let a = &self.arrays[id.0];
        let mut d = if a.data().is_some() { a.to_dense() } else { a.materialize_from(self.buffer(id)) };
        d.set_inplace(false);
        Ok(d)
    }

    /// Writes one element and propagates the change.
    pub fn set(&mut self, id: ArrayId, idx: &[usize], v: impl Into<Scalar>) -> Result<(), FlowError> {
        self.check_writable(id)?;
        self.make_physical(id)?;
        let off = self.arrays[id.0].offset_of(idx, true)?;
        let r = self.root(id);
        self.arrays[r.0].data_mut().expect("root owns storage").set(off, v.into());
        self.mark_changed(id)
    }

    /// Applies `f` to the current values (as a dense array of the same
    /// shape and dtype), stores the result, and propagates the change.
    pub fn update(&mut self, id: ArrayId, f: impl FnOnce(&mut NdArray)) -> Result<(), FlowError> {
        self.check_writable(id)?;
        let mut a = self.read(id)?;
        f(&mut a);
        if a.dims() != self.arrays[id.0].dims() {
            return Err(ArrayError::IndexOutOfBounds { detail: "update changed the shape".into() }.into());
        }
        let a = a.convert_dtype(self.arrays[id.0].dtype());
        self.write_all(id, &a);
        let flag = a.badflag();
        self.arrays[id.0].set_badflag(flag);
        self.mark_changed(id)
    }

    /// Cuts `id` loose from its parent; it keeps its current values.
    pub fn sever(&mut self, id: ArrayId) -> Result<(), FlowError> {
        self.make_physical(id)?;
        let Some(tid) = self.arrays[id.0].trans_parent else {
            return Ok(());
        };
        if self.arrays[id.0].data().is_none() {
            let d = self.dense(id);
            let buf = d.data().expect("dense").clone();
            self.arrays[id.0].adopt_buffer(buf);
            self.rebase_views(id);
        }
        let t = self.trans[tid.0].take().expect("live trans");
        let p = &mut self.arrays[t.parent.0];
        p.trans_children.retain(|&c| c != tid);
        if p.trans_children.is_empty() {
            p.state_mut().remove(StateFlags::DATAFLOW_F);
        }
        let c = &mut self.arrays[id.0];
        c.trans_parent = None;
        c.state_mut().remove(StateFlags::DATAFLOW_B | StateFlags::ANYCHANGED);
        Ok(())
    }

    /// Recomputes the layout of affine descendants after `id` moved.
    fn rebase_views(&mut self, id: ArrayId) {
        let kids = self.arrays[id.0].trans_children.clone();
        for tid in kids {
            let Some(t) = self.trans(tid) else { continue };
            let Some(map) = t.affine.clone() else { continue };
            let c = t.child;
            let (off, incs) = map.layout(self.arrays[id.0].offset(), self.arrays[id.0].dimincs());
            self.arrays[c.0].set_view(incs, off);
            self.rebase_views(c);
        }
    }
}
