//! Strided, typed n-dimensional arrays.
//!
//! Elements live in one flat buffer per array with dimension 0 fastest. The
//! offset of an index tuple is `offset + sum(index[k] * dimincs[k])`. Arrays
//! that are views into another array's storage (see [`crate::dataflow`]) carry
//! no buffer of their own, and their `dimincs` need not follow the
//! fresh-array recurrence.

use std::fmt;

use bitflags::bitflags;
use thiserror::Error;

use crate::dataflow::TransId;

/// Element type, listed in promotion order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Dtype {
    Byte,
    Short,
    UShort,
    Int,
    /// Signed 64-bit index type.
    Indx,
    LongLong,
    Float,
    Double,
}

impl Dtype {
    pub const ALL: [Dtype; 8] = [
        Dtype::Byte,
        Dtype::Short,
        Dtype::UShort,
        Dtype::Int,
        Dtype::Indx,
        Dtype::LongLong,
        Dtype::Float,
        Dtype::Double,
    ];

    /// Position in the promotion ladder (Byte = 0 ... Double = 7).
    pub fn rank(self) -> usize {
        self as usize
    }

    pub fn from_rank(rank: usize) -> Option<Dtype> {
        Dtype::ALL.get(rank).copied()
    }

    pub fn is_float(self) -> bool {
        matches!(self, Dtype::Float | Dtype::Double)
    }

    /// Lower-case name used in signatures, opdef files and array literals.
    pub fn name(self) -> &'static str {
        match self {
            Dtype::Byte => "byte",
            Dtype::Short => "short",
            Dtype::UShort => "ushort",
            Dtype::Int => "int",
            Dtype::Indx => "indx",
            Dtype::LongLong => "longlong",
            Dtype::Float => "float",
            Dtype::Double => "double",
        }
    }

    /// Type name emitted by the loop-nest expander.
    pub fn c_name(self) -> &'static str {
        match self {
            Dtype::Byte => "unsigned char",
            Dtype::Short => "short",
            Dtype::UShort => "unsigned short",
            Dtype::Int => "int",
            Dtype::Indx => "PDL_Indx",
            Dtype::LongLong => "long long",
            Dtype::Float => "float",
            Dtype::Double => "double",
        }
    }

    pub fn from_name(name: &str) -> Option<Dtype> {
        Dtype::ALL.iter().copied().find(|t| t.name() == name)
    }

    /// Converts a scalar to the value this dtype would store.
    ///
    /// Floats truncate toward zero on the way to integer types; integers wrap
    /// (two's complement for signed, modulo for unsigned).
    pub fn cast(self, v: Scalar) -> Scalar {
        match self {
            Dtype::Float => Scalar::Float(v.as_f64() as f32 as f64),
            Dtype::Double => Scalar::Float(v.as_f64()),
            _ => {
                let i = v.trunc_i64();
                Scalar::Int(match self {
                    Dtype::Byte => i as u8 as i64,
                    Dtype::Short => i as i16 as i64,
                    Dtype::UShort => i as u16 as i64,
                    Dtype::Int => i as i32 as i64,
                    _ => i,
                })
            }
        }
    }
}

impl fmt::Display for Dtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A single element value: integer kinds widen to `i64`, float kinds to `f64`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scalar {
    Int(i64),
    Float(f64),
}

impl Scalar {
    pub fn as_f64(self) -> f64 {
        match self {
            Scalar::Int(i) => i as f64,
            Scalar::Float(f) => f,
        }
    }

    /// Truncation toward zero; NaN maps to 0 and out-of-range floats saturate.
    pub fn trunc_i64(self) -> i64 {
        match self {
            Scalar::Int(i) => i,
            Scalar::Float(f) => f.trunc() as i64,
        }
    }

    pub fn is_truthy(self) -> bool {
        match self {
            Scalar::Int(i) => i != 0,
            Scalar::Float(f) => f != 0.0,
        }
    }

    pub fn is_nan(self) -> bool {
        matches!(self, Scalar::Float(f) if f.is_nan())
    }

    /// Bitwise-exact comparison (NaN equals NaN); used for bad-value tests
    /// against explicit overrides and for array equality.
    pub fn same(self, other: Scalar) -> bool {
        match (self, other) {
            (Scalar::Int(a), Scalar::Int(b)) => a == b,
            (Scalar::Float(a), Scalar::Float(b)) => a == b || (a.is_nan() && b.is_nan()),
            (a, b) => a.as_f64() == b.as_f64(),
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Int(i) => write!(f, "{i}"),
            Scalar::Float(x) => write!(f, "{x}"),
        }
    }
}

impl From<i64> for Scalar {
    fn from(v: i64) -> Self {
        Scalar::Int(v)
    }
}

impl From<f64> for Scalar {
    fn from(v: f64) -> Self {
        Scalar::Float(v)
    }
}

/// Default in-band bad value: signed minimum, unsigned maximum, NaN for floats.
pub fn default_badvalue(t: Dtype) -> Scalar {
    match t {
        Dtype::Byte => Scalar::Int(u8::MAX as i64),
        Dtype::Short => Scalar::Int(i16::MIN as i64),
        Dtype::UShort => Scalar::Int(u16::MAX as i64),
        Dtype::Int => Scalar::Int(i32::MIN as i64),
        Dtype::Indx | Dtype::LongLong => Scalar::Int(i64::MIN),
        Dtype::Float | Dtype::Double => Scalar::Float(f64::NAN),
    }
}

bitflags! {
    /// Per-array state bits.
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
    pub struct StateFlags: u32 {
        const ALLOCATED = 1 << 0;
        const PARENTDATACHANGED = 1 << 1;
        const PARENTDIMSCHANGED = 1 << 2;
        const PARENTREPRCHANGED = 1 << 3;
        const DATAFLOW_F = 1 << 4;
        const DATAFLOW_B = 1 << 5;
        const NOMYDIMS = 1 << 6;
        const BADVAL = 1 << 7;
        const INPLACE = 1 << 8;

        const ANYCHANGED = Self::PARENTDATACHANGED.bits()
            | Self::PARENTDIMSCHANGED.bits()
            | Self::PARENTREPRCHANGED.bits();
        const DATAFLOW_ANY = Self::DATAFLOW_F.bits() | Self::DATAFLOW_B.bits();
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ArrayError {
    #[error("index out of bounds: {detail}")]
    IndexOutOfBounds { detail: String },
    #[error("access to the data of a null array")]
    NullArrayAccess,
    #[error("expected {expected} indices, got {got}")]
    IndexArity { expected: usize, got: usize },
}

/// Typed element storage.
#[derive(Debug, Clone, PartialEq)]
pub enum Buffer {
    Byte(Vec<u8>),
    Short(Vec<i16>),
    UShort(Vec<u16>),
    Int(Vec<i32>),
    Indx(Vec<i64>),
    LongLong(Vec<i64>),
    Float(Vec<f32>),
    Double(Vec<f64>),
}

macro_rules! each_buffer {
    ($buf:expr, $v:ident => $body:expr) => {
        match $buf {
            Buffer::Byte($v) => $body,
            Buffer::Short($v) => $body,
            Buffer::UShort($v) => $body,
            Buffer::Int($v) => $body,
            Buffer::Indx($v) => $body,
            Buffer::LongLong($v) => $body,
            Buffer::Float($v) => $body,
            Buffer::Double($v) => $body,
        }
    };
}

impl Buffer {
    pub fn filled(dtype: Dtype, len: usize, fill: Scalar) -> Buffer {
        let v = dtype.cast(fill);
        let (i, f) = (v.trunc_i64(), v.as_f64());
        match dtype {
            Dtype::Byte => Buffer::Byte(vec![i as u8; len]),
            Dtype::Short => Buffer::Short(vec![i as i16; len]),
            Dtype::UShort => Buffer::UShort(vec![i as u16; len]),
            Dtype::Int => Buffer::Int(vec![i as i32; len]),
            Dtype::Indx => Buffer::Indx(vec![i; len]),
            Dtype::LongLong => Buffer::LongLong(vec![i; len]),
            Dtype::Float => Buffer::Float(vec![f as f32; len]),
            Dtype::Double => Buffer::Double(vec![f; len]),
        }
    }

    pub fn dtype(&self) -> Dtype {
        match self {
            Buffer::Byte(_) => Dtype::Byte,
            Buffer::Short(_) => Dtype::Short,
            Buffer::UShort(_) => Dtype::UShort,
            Buffer::Int(_) => Dtype::Int,
            Buffer::Indx(_) => Dtype::Indx,
            Buffer::LongLong(_) => Dtype::LongLong,
            Buffer::Float(_) => Dtype::Float,
            Buffer::Double(_) => Dtype::Double,
        }
    }

    pub fn len(&self) -> usize {
        each_buffer!(self, v => v.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Unchecked-by-dims read; panics only if `i` is outside the buffer.
    #[inline]
    pub fn get(&self, i: usize) -> Scalar {
        match self {
            Buffer::Byte(v) => Scalar::Int(v[i] as i64),
            Buffer::Short(v) => Scalar::Int(v[i] as i64),
            Buffer::UShort(v) => Scalar::Int(v[i] as i64),
            Buffer::Int(v) => Scalar::Int(v[i] as i64),
            Buffer::Indx(v) => Scalar::Int(v[i]),
            Buffer::LongLong(v) => Scalar::Int(v[i]),
            Buffer::Float(v) => Scalar::Float(v[i] as f64),
            Buffer::Double(v) => Scalar::Float(v[i]),
        }
    }

    /// Stores `x` cast to the buffer's dtype and returns the stored value.
    #[inline]
    pub fn set(&mut self, i: usize, x: Scalar) -> Scalar {
        let stored = self.dtype().cast(x);
        match self {
            Buffer::Byte(v) => v[i] = stored.trunc_i64() as u8,
            Buffer::Short(v) => v[i] = stored.trunc_i64() as i16,
            Buffer::UShort(v) => v[i] = stored.trunc_i64() as u16,
            Buffer::Int(v) => v[i] = stored.trunc_i64() as i32,
            Buffer::Indx(v) => v[i] = stored.trunc_i64(),
            Buffer::LongLong(v) => v[i] = stored.trunc_i64(),
            Buffer::Float(v) => v[i] = stored.as_f64() as f32,
            Buffer::Double(v) => v[i] = stored.as_f64(),
        }
        stored
    }
}

/// Element strides for a freshly allocated array: `dimincs[0] = 1`,
/// `dimincs[k] = dimincs[k-1] * dims[k-1]`.
pub fn fresh_dimincs(dims: &[usize]) -> Vec<isize> {
    let mut incs = Vec::with_capacity(dims.len());
    let mut acc: isize = 1;
    for &d in dims {
        incs.push(acc);
        acc *= d as isize;
    }
    incs
}

/// The n-dimensional array value.
#[derive(Debug, Clone)]
pub struct NdArray {
    dtype: Dtype,
    dims: Vec<usize>,
    dimincs: Vec<isize>,
    offset: usize,
    data: Option<Buffer>,
    state: StateFlags,
    badvalue_override: Option<Scalar>,
    pub(crate) trans_parent: Option<TransId>,
    pub(crate) trans_children: Vec<TransId>,
}

impl NdArray {
    /// Allocates an array with every element set to `fill` (cast to `dtype`).
    pub fn new_filled(dtype: Dtype, dims: &[usize], fill: impl Into<Scalar>) -> NdArray {
        let nvals = dims.iter().product();
        NdArray {
            dtype,
            dims: dims.to_vec(),
            dimincs: fresh_dimincs(dims),
            offset: 0,
            data: Some(Buffer::filled(dtype, nvals, fill.into())),
            state: StateFlags::ALLOCATED,
            badvalue_override: None,
            trans_parent: None,
            trans_children: Vec::new(),
        }
    }

    pub fn zeros(dtype: Dtype, dims: &[usize]) -> NdArray {
        NdArray::new_filled(dtype, dims, Scalar::Int(0))
    }

    /// Builds an array from values given in storage order (dim 0 fastest).
    ///
    /// Panics if the value count differs from the product of `dims`.
    pub fn from_values(dtype: Dtype, dims: &[usize], values: &[Scalar]) -> NdArray {
        let mut a = NdArray::zeros(dtype, dims);
        assert_eq!(values.len(), a.nvals(), "value count must match dims");
        let buf = a.data.as_mut().expect("fresh array has data");
        for (i, v) in values.iter().enumerate() {
            buf.set(i, *v);
        }
        a
    }

    pub fn from_f64(dtype: Dtype, dims: &[usize], values: &[f64]) -> NdArray {
        let vals: Vec<Scalar> = values.iter().map(|&v| Scalar::Float(v)).collect();
        NdArray::from_values(dtype, dims, &vals)
    }

    pub fn from_i64(dtype: Dtype, dims: &[usize], values: &[i64]) -> NdArray {
        let vals: Vec<Scalar> = values.iter().map(|&v| Scalar::Int(v)).collect();
        NdArray::from_values(dtype, dims, &vals)
    }

    /// Zero-dimensional array holding one value.
    pub fn scalar(dtype: Dtype, v: impl Into<Scalar>) -> NdArray {
        NdArray::new_filled(dtype, &[], v)
    }

    /// A placeholder with no dimlist and no data.
    pub fn null() -> NdArray {
        NdArray {
            dtype: Dtype::Double,
            dims: Vec::new(),
            dimincs: Vec::new(),
            offset: 0,
            data: None,
            state: StateFlags::NOMYDIMS,
            badvalue_override: None,
            trans_parent: None,
            trans_children: Vec::new(),
        }
    }

    /// A view header whose elements live in another array's buffer.
    pub(crate) fn view_header(dtype: Dtype, dims: Vec<usize>, dimincs: Vec<isize>, offset: usize) -> NdArray {
        NdArray {
            dtype,
            dims,
            dimincs,
            offset,
            data: None,
            state: StateFlags::empty(),
            badvalue_override: None,
            trans_parent: None,
            trans_children: Vec::new(),
        }
    }

    pub fn dtype(&self) -> Dtype {
        self.dtype
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ndims(&self) -> usize {
        self.dims.len()
    }

    pub fn dimincs(&self) -> &[isize] {
        &self.dimincs
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    /// Element count; 0 for a null array.
    pub fn nvals(&self) -> usize {
        if self.is_null() {
            0
        } else {
            self.dims.iter().product()
        }
    }

    pub fn is_null(&self) -> bool {
        self.state.contains(StateFlags::NOMYDIMS)
    }

    pub fn is_empty(&self) -> bool {
        self.nvals() == 0
    }

    pub fn state(&self) -> StateFlags {
        self.state
    }

    pub fn state_mut(&mut self) -> &mut StateFlags {
        &mut self.state
    }

    pub fn data(&self) -> Option<&Buffer> {
        self.data.as_ref()
    }

    pub(crate) fn data_mut(&mut self) -> Option<&mut Buffer> {
        self.data.as_mut()
    }

    /// Replaces a view header's missing storage with an owned buffer.
    pub(crate) fn adopt_buffer(&mut self, buf: Buffer) {
        debug_assert_eq!(buf.len(), self.dims.iter().product::<usize>());
        self.dimincs = fresh_dimincs(&self.dims);
        self.offset = 0;
        self.data = Some(buf);
        self.state.insert(StateFlags::ALLOCATED);
    }

    pub(crate) fn set_view(&mut self, dimincs: Vec<isize>, offset: usize) {
        self.dimincs = dimincs;
        self.offset = offset;
    }

    pub fn badflag(&self) -> bool {
        self.state.contains(StateFlags::BADVAL)
    }

    /// Sets or clears the bad flag; stored elements are left untouched.
    pub fn set_badflag(&mut self, v: bool) {
        self.state.set(StateFlags::BADVAL, v);
    }

    pub fn set_inplace(&mut self, v: bool) {
        self.state.set(StateFlags::INPLACE, v);
    }

    pub fn is_inplace(&self) -> bool {
        self.state.contains(StateFlags::INPLACE)
    }

    pub fn badvalue_override(&self) -> Option<Scalar> {
        self.badvalue_override
    }

    pub fn set_badvalue_override(&mut self, v: Option<Scalar>) {
        self.badvalue_override = v.map(|v| self.dtype.cast(v));
    }

    /// The value this array treats as bad.
    pub fn badvalue(&self) -> Scalar {
        self.badvalue_override.unwrap_or_else(|| default_badvalue(self.dtype))
    }

    /// Whether `v` matches this array's bad value (NaN test for floats
    /// without an override).
    pub fn is_bad_value(&self, v: Scalar) -> bool {
        match self.badvalue_override {
            Some(b) => v.same(b),
            None if self.dtype.is_float() => v.is_nan(),
            None => v.same(default_badvalue(self.dtype)),
        }
    }

    /// Buffer offset of an index tuple.
    pub fn offset_of(&self, indices: &[usize], check: bool) -> Result<usize, ArrayError> {
        if indices.len() != self.dims.len() {
            return Err(ArrayError::IndexArity { expected: self.dims.len(), got: indices.len() });
        }
        let mut off = self.offset as isize;
        for (k, (&i, &inc)) in indices.iter().zip(&self.dimincs).enumerate() {
            if check && i >= self.dims[k] {
                return Err(ArrayError::IndexOutOfBounds {
                    detail: format!("index {i} on dim {k} of size {}", self.dims[k]),
                });
            }
            off += i as isize * inc;
        }
        Ok(off as usize)
    }

    fn buffer(&self) -> Result<&Buffer, ArrayError> {
        self.data.as_ref().ok_or(ArrayError::NullArrayAccess)
    }

    pub fn get_elem(&self, offset: usize) -> Result<Scalar, ArrayError> {
        let buf = self.buffer()?;
        if offset >= buf.len() {
            return Err(ArrayError::IndexOutOfBounds {
                detail: format!("offset {offset} outside buffer of {} elements", buf.len()),
            });
        }
        Ok(buf.get(offset))
    }

    pub fn set_elem(&mut self, offset: usize, v: impl Into<Scalar>) -> Result<(), ArrayError> {
        let buf = self.data.as_mut().ok_or(ArrayError::NullArrayAccess)?;
        if offset >= buf.len() {
            return Err(ArrayError::IndexOutOfBounds {
                detail: format!("offset {offset} outside buffer of {} elements", buf.len()),
            });
        }
        buf.set(offset, v.into());
        Ok(())
    }

    /// Read by index tuple with bounds checking.
    pub fn at(&self, indices: &[usize]) -> Result<Scalar, ArrayError> {
        let off = self.offset_of(indices, true)?;
        self.get_elem(off)
    }

    pub fn set_at(&mut self, indices: &[usize], v: impl Into<Scalar>) -> Result<(), ArrayError> {
        let off = self.offset_of(indices, true)?;
        self.set_elem(off, v)
    }

    /// Elements in logical order (dim 0 fastest), following `dimincs`.
    pub fn values(&self) -> Vec<Scalar> {
        match self.data.as_ref() {
            Some(buf) => self.element_offsets().into_iter().map(|o| buf.get(o)).collect(),
            None => Vec::new(),
        }
    }

    /// Buffer offsets of every element, in storage order of a dense copy.
    pub(crate) fn element_offsets(&self) -> Vec<usize> {
        if self.is_null() {
            return Vec::new();
        }
        let n = self.nvals();
        let mut out = Vec::with_capacity(n);
        let mut idx = vec![0usize; self.dims.len()];
        for _ in 0..n {
            let off = self.offset as isize
                + idx.iter().zip(&self.dimincs).map(|(&i, &inc)| i as isize * inc).sum::<isize>();
            out.push(off as usize);
            increment_index(&mut idx, &self.dims);
        }
        out
    }

    /// Dense copy of a view header's elements read out of `buf`.
    pub(crate) fn materialize_from(&self, buf: &Buffer) -> NdArray {
        let vals: Vec<Scalar> = self.element_offsets().into_iter().map(|o| buf.get(o)).collect();
        let mut a = NdArray::from_values(self.dtype, &self.dims, &vals);
        a.state = self.state & (StateFlags::BADVAL | StateFlags::INPLACE);
        a.state.insert(StateFlags::ALLOCATED);
        a.badvalue_override = self.badvalue_override;
        a
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.values().into_iter().map(Scalar::as_f64).collect()
    }

    /// Casts every element to `t`; bad elements become `t`'s bad value when
    /// the bad flag is set. Same-dtype conversion is a plain copy.
    pub fn convert_dtype(&self, t: Dtype) -> NdArray {
        if self.is_null() {
            return self.clone();
        }
        let same = t == self.dtype;
        let mut out = NdArray::zeros(t, &self.dims);
        let buf = out.data.as_mut().expect("fresh array");
        let bad = self.badflag();
        let target_bad = default_badvalue(t);
        for (i, v) in self.values().into_iter().enumerate() {
            if bad && !same && self.is_bad_value(v) {
                buf.set(i, target_bad);
            } else {
                buf.set(i, v);
            }
        }
        out.set_badflag(bad);
        if same {
            out.badvalue_override = self.badvalue_override;
        }
        out.state.set(StateFlags::INPLACE, self.is_inplace());
        out
    }

    /// Dense copy with fresh strides and no dataflow links.
    pub fn to_dense(&self) -> NdArray {
        let mut a = self.convert_dtype(self.dtype);
        a.trans_parent = None;
        a.trans_children.clear();
        a
    }

    /// Element-wise equality of dtype, dims and values (NaN equals NaN).
    pub fn same_values(&self, other: &NdArray) -> bool {
        self.dtype == other.dtype
            && self.dims == other.dims
            && self.is_null() == other.is_null()
            && self.values().iter().zip(other.values()).all(|(a, b)| a.same(b))
    }
}

impl PartialEq for NdArray {
    fn eq(&self, other: &Self) -> bool {
        self.same_values(other) && self.badflag() == other.badflag()
    }
}

/// Advances a dim-0-fastest odometer. Returns false after wrapping around.
pub fn increment_index(idx: &mut [usize], dims: &[usize]) -> bool {
    for k in 0..idx.len() {
        idx[k] += 1;
        if idx[k] < dims[k] {
            return true;
        }
        idx[k] = 0;
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn new_filled_examples() {
        let a = NdArray::new_filled(Dtype::Double, &[3], 0.0);
        assert_eq!(a.dims(), &[3]);
        assert_eq!(a.nvals(), 3);
        assert_eq!(a.to_f64_vec(), vec![0.0, 0.0, 0.0]);
        assert!(a.state().contains(StateFlags::ALLOCATED));

        let b = NdArray::new_filled(Dtype::Int, &[2, 3], 1i64);
        assert_eq!(b.dimincs(), &[1, 2]);
        assert_eq!(b.nvals(), 6);

        let c = NdArray::new_filled(Dtype::Float, &[0], 7.0);
        assert_eq!(c.nvals(), 0);
        assert!(c.data().unwrap().is_empty());
    }

    #[test]
    fn null_array() {
        let n = NdArray::null();
        assert!(n.state().contains(StateFlags::NOMYDIMS));
        assert!(n.data().is_none());
        assert_eq!(n.ndims(), 0);
        assert_eq!(n.nvals(), 0);
        assert_eq!(n.get_elem(0), Err(ArrayError::NullArrayAccess));
    }

    #[test]
    fn offset_examples() {
        let a = NdArray::zeros(Dtype::Double, &[2, 3]);
        assert_eq!(a.offset_of(&[1, 2], true).unwrap(), 5);
        assert_eq!(a.offset_of(&[0, 0], true).unwrap(), 0);
        assert!(matches!(a.offset_of(&[2, 0], true), Err(ArrayError::IndexOutOfBounds { .. })));
        // unchecked: only the formula is applied
        assert_eq!(a.offset_of(&[2, 0], false).unwrap(), 2);
    }

    #[test]
    fn set_get_and_truncation() {
        let mut a = NdArray::zeros(Dtype::Int, &[4]);
        a.set_elem(2, 17i64).unwrap();
        assert_eq!(a.get_elem(2).unwrap(), Scalar::Int(17));
        a.set_elem(1, 3.7).unwrap();
        assert_eq!(a.get_elem(1).unwrap(), Scalar::Int(3));
        a.set_elem(0, -3.7).unwrap();
        assert_eq!(a.get_elem(0).unwrap(), Scalar::Int(-3));
        assert!(a.set_elem(4, 1i64).is_err());
    }

    #[test]
    fn wrapping_casts() {
        assert_eq!(Dtype::Short.cast(Scalar::Int(70000)), Scalar::Int(4464));
        assert_eq!(Dtype::Byte.cast(Scalar::Int(-1)), Scalar::Int(255));
        assert_eq!(Dtype::Byte.cast(Scalar::Float(256.9)), Scalar::Int(0));
        assert_eq!(Dtype::UShort.cast(Scalar::Int(-2)), Scalar::Int(65534));
    }

    #[test]
    fn convert_examples() {
        let a = NdArray::from_i64(Dtype::Byte, &[3], &[1, 2, 3]);
        let d = a.convert_dtype(Dtype::Double);
        assert_eq!(d.dtype(), Dtype::Double);
        assert_eq!(d.to_f64_vec(), vec![1.0, 2.0, 3.0]);
        assert_eq!(a.convert_dtype(Dtype::Byte), a);

        let mut s = NdArray::from_i64(Dtype::Short, &[2], &[-32768, 5]);
        s.set_badflag(true);
        let d = s.convert_dtype(Dtype::Double);
        assert!(d.badflag());
        let v = d.to_f64_vec();
        assert!(v[0].is_nan());
        assert_eq!(v[1], 5.0);
    }

    #[test]
    fn badflag_is_flag_only() {
        let mut a = NdArray::from_i64(Dtype::Short, &[1], &[-32768]);
        a.set_badflag(true);
        assert!(a.badflag());
        a.set_badflag(false);
        assert!(!a.badflag());
        assert_eq!(a.get_elem(0).unwrap(), Scalar::Int(-32768));
    }

    #[test]
    fn default_badvalues() {
        assert_eq!(default_badvalue(Dtype::Short), Scalar::Int(-32768));
        assert_eq!(default_badvalue(Dtype::UShort), Scalar::Int(65535));
        assert!(default_badvalue(Dtype::Double).is_nan());
    }

    proptest! {
        #[test]
        fn stride_recurrence(dims in prop::collection::vec(0usize..=5, 0..=6)) {
            let a = NdArray::zeros(Dtype::Float, &dims);
            prop_assert_eq!(a.nvals(), dims.iter().product::<usize>());
            let incs = a.dimincs();
            if !dims.is_empty() {
                prop_assert_eq!(incs[0], 1);
            }
            for k in 1..dims.len() {
                prop_assert_eq!(incs[k], incs[k - 1] * dims[k - 1] as isize);
            }
            if dims.contains(&0) {
                prop_assert!(a.get_elem(0).is_err());
            }
        }

        #[test]
        fn offset_injective(dims in prop::collection::vec(1usize..=4, 0..=4)) {
            let a = NdArray::zeros(Dtype::Byte, &dims);
            let mut seen = std::collections::HashSet::new();
            let mut idx = vec![0usize; dims.len()];
            let n: usize = dims.iter().product();
            for _ in 0..n {
                prop_assert!(seen.insert(a.offset_of(&idx, true).unwrap()));
                increment_index(&mut idx, &dims);
            }
            prop_assert_eq!(seen.len(), n);
        }
    }

    #[test]
    fn byte_double_byte_identity() {
        let vals: Vec<i64> = (0..=255).collect();
        let a = NdArray::from_i64(Dtype::Byte, &[256], &vals);
        let back = a.convert_dtype(Dtype::Double).convert_dtype(Dtype::Byte);
        assert_eq!(back, a);
    }
}
