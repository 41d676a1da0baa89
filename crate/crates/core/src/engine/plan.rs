//! Dimension binding and the threading rules.
//!
//! Active dims bind from the front of each argument. An argument with fewer
//! dims than its parameter declares gets the missing trailing active dims as
//! size-1 wildcards: they read with stride 0 and take whatever size another
//! argument binds. Explicitly present dims must agree exactly.
//!
//! Trailing dims beyond the active ones are thread dims, combined position by
//! position: a missing position counts as size 1, size 1 repeats, and every
//! other size must match.

use std::collections::BTreeMap;
use std::fmt;

use crate::ndarray::{Dtype, NdArray};
use crate::sigparse::Signature;
use crate::typesys::{param_dtype, resolve_generic, GenericList};

use super::EngineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Input,
    InOut,
    Output,
    Temp,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Input => "input",
            Role::InOut => "in/out",
            Role::Output => "output",
            Role::Temp => "temp",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamPlan {
    pub name: String,
    pub role: Role,
    pub dtype: Dtype,
    pub supplied: bool,
    /// Active sizes followed by thread dims; temporaries get active sizes only.
    pub dims: Vec<usize>,
    /// Per active dim: the argument lacked it and it reads with stride 0.
    pub padded: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BroadcastPlan {
    pub generic: Dtype,
    pub dim_sizes: BTreeMap<String, usize>,
    pub thread_dims: Vec<usize>,
    pub params: Vec<ParamPlan>,
}

impl BroadcastPlan {
    pub fn ntuples(&self) -> usize {
        self.thread_dims.iter().product()
    }
}

impl fmt::Display for BroadcastPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "generic: {}", self.generic)?;
        let sizes: Vec<String> = self.dim_sizes.iter().map(|(k, v)| format!("{k}={v}")).collect();
        writeln!(f, "dims: {}", sizes.join(" "))?;
        writeln!(f, "thread dims: {:?}", self.thread_dims)?;
        for p in &self.params {
            let src = match (p.role, p.supplied) {
                (Role::Temp, _) => "scratch",
                (_, true) => "supplied",
                (_, false) => "created",
            };
            writeln!(f, "{} {} {}: {:?} ({src})", p.role, p.dtype, p.name, p.dims)?;
        }
        Ok(())
    }
}

pub fn role_of(sig: &Signature, i: usize) -> Role {
    let f = &sig.params[i].flags;
    if f.t {
        Role::Temp
    } else if f.io {
        Role::InOut
    } else if f.o || f.oca {
        Role::Output
    } else {
        Role::Input
    }
}

/// Strides of `a` for a parameter with `nactive` active dims under `plan`.
/// Missing or size-1 positions read with stride 0.
pub(crate) fn strides_for(dims: &[usize], incs: &[isize], nactive: usize, thread_dims: &[usize]) -> (Vec<isize>, Vec<isize>) {
    let active = (0..nactive).map(|k| if k < dims.len() && dims[k] != 1 { incs[k] } else { 0 }).collect();
    let thread = (0..thread_dims.len())
        .map(|j| {
            let pos = nactive + j;
            if pos < dims.len() && dims[pos] != 1 {
                incs[pos]
            } else {
                0
            }
        })
        .collect();
    (active, thread)
}

#[cfg(test)]
/// Strides for an array the engine allocates itself.
pub(crate) fn fresh_strides(dims: &[usize], nactive: usize, thread_dims: &[usize]) -> (Vec<isize>, Vec<isize>) {
    strides_for(dims, &crate::ndarray::fresh_dimincs(dims), nactive, thread_dims)
}

fn bind(
    sizes: &mut BTreeMap<String, usize>,
    sig: &Signature,
    param: &str,
    key: &str,
    got: usize,
) -> Result<(), EngineError> {
    if let Some(fixed) = sig.fixed_size(key) {
        if got != fixed {
            return Err(EngineError::FixedSizeMismatch { param: param.into(), dim: key.into(), fixed, got });
        }
    }
    match sizes.get(key) {
        Some(&have) if have != got => Err(EngineError::ActiveDimMismatch {
            param: param.into(),
            dim: key.into(),
            expected: have,
            got,
        }),
        _ => {
            sizes.insert(key.into(), got);
            Ok(())
        }
    }
}

/// Resolves dim sizes, thread dims and per-parameter dtypes for a call.
///
/// `args[i]` is the array bound to parameter `i`, or `None` when absent.
/// `overrides` holds sizes assigned by redodims code; they bind first.
pub fn make_plan(
    sig: &Signature,
    gl: &GenericList,
    args: &[Option<&NdArray>],
    overrides: &BTreeMap<String, usize>,
) -> Result<BroadcastPlan, EngineError> {
    let n = sig.params.len();
    let roles: Vec<Role> = (0..n).map(|i| role_of(sig, i)).collect();
    let arg = |i: usize| args.get(i).copied().flatten().filter(|a| !a.is_null());
    for (i, p) in sig.params.iter().enumerate() {
        if matches!(roles[i], Role::Input | Role::InOut) && arg(i).is_none() {
            return Err(EngineError::MissingInput(p.name.clone()));
        }
    }

    let dtypes: Vec<Option<Dtype>> = (0..n)
        .map(|i| if roles[i] == Role::Temp { None } else { arg(i).map(NdArray::dtype) })
        .collect();
    let generic = resolve_generic(sig, &dtypes, gl)?;

    let mut sizes: BTreeMap<String, usize> = BTreeMap::new();
    for (k, &v) in overrides {
        bind(&mut sizes, sig, "redodims", k, v)?;
    }
    let mut padded_all: Vec<Vec<bool>> = Vec::with_capacity(n);
    for (i, p) in sig.params.iter().enumerate() {
        let keys = p.dim_keys();
        let mut padded = vec![false; keys.len()];
        if let Some(a) = arg(i) {
            for (k, key) in keys.iter().enumerate() {
                if k < a.ndims() {
                    bind(&mut sizes, sig, &p.name, key, a.dims()[k])?;
                } else {
                    padded[k] = true;
                }
            }
        }
        padded_all.push(padded);
    }
    for (i, p) in sig.params.iter().enumerate() {
        for (k, key) in p.dim_keys().iter().enumerate() {
            if sizes.contains_key(key) {
                continue;
            }
            if let Some(fixed) = sig.fixed_size(key) {
                sizes.insert(key.clone(), fixed);
            } else if padded_all[i][k] {
                sizes.insert(key.clone(), 1);
            }
        }
    }
    for p in &sig.params {
        for key in p.dim_keys() {
            if !sizes.contains_key(&key) {
                return Err(EngineError::UnresolvedDim { param: p.name.clone(), dim: key });
            }
        }
    }

    let mut thread_dims: Vec<usize> = Vec::new();
    let mut thread_src: Vec<String> = Vec::new();
    for (i, p) in sig.params.iter().enumerate() {
        if !matches!(roles[i], Role::Input | Role::InOut) {
            continue;
        }
        let a = arg(i).expect("inputs checked above");
        let nact = p.active_dims.len();
        for (j, &s) in a.dims().iter().skip(nact).enumerate() {
            if j == thread_dims.len() {
                thread_dims.push(s);
                thread_src.push(p.name.clone());
            } else if thread_dims[j] == 1 {
                thread_dims[j] = s;
                thread_src[j] = p.name.clone();
            } else if s != 1 && s != thread_dims[j] {
                return Err(EngineError::ThreadDimMismatch {
                    pos: j,
                    a: thread_src[j].clone(),
                    a_size: thread_dims[j],
                    b: p.name.clone(),
                    b_size: s,
                });
            }
        }
    }

    let mut params = Vec::with_capacity(n);
    for (i, p) in sig.params.iter().enumerate() {
        let mut dims: Vec<usize> = p.dim_keys().iter().map(|k| sizes[k]).collect();
        if roles[i] != Role::Temp {
            dims.extend_from_slice(&thread_dims);
        }
        let supplied = arg(i).is_some();
        if roles[i] == Role::Output {
            if let Some(a) = arg(i) {
                if a.dims() != dims.as_slice() {
                    return Err(EngineError::OutputShapeMismatch {
                        param: p.name.clone(),
                        expected: dims,
                        got: a.dims().to_vec(),
                    });
                }
            }
        }
        params.push(ParamPlan {
            name: p.name.clone(),
            role: roles[i],
            dtype: param_dtype(p, generic),
            supplied,
            dims,
            padded: padded_all[i].clone(),
        });
    }
    Ok(BroadcastPlan { generic, dim_sizes: sizes, thread_dims, params })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sigparse::signature;

    fn plan(sig: &str, args: &[Option<&NdArray>]) -> Result<BroadcastPlan, EngineError> {
        make_plan(&signature(sig).unwrap(), &GenericList::all(), args, &BTreeMap::new())
    }

    #[test]
    fn threading_rules() {
        let a = NdArray::zeros(Dtype::Double, &[3, 1, 4]);
        let b = NdArray::zeros(Dtype::Byte, &[3, 5]);
        let p = plan("a(n); b(n); [o]c(n)", &[Some(&a), Some(&b), None]).unwrap();
        assert_eq!(p.thread_dims, vec![5, 4]);
        assert_eq!(p.params[2].dims, vec![3, 5, 4]);
        assert_eq!(p.generic, Dtype::Double);

        let c = NdArray::zeros(Dtype::Double, &[3, 2]);
        let d = NdArray::zeros(Dtype::Double, &[3, 0]);
        assert!(matches!(
            plan("a(n); b(n); [o]c(n)", &[Some(&c), Some(&d), None]),
            Err(EngineError::ThreadDimMismatch { pos: 0, .. })
        ));
        let e = NdArray::zeros(Dtype::Double, &[3, 1]);
        let p = plan("a(n); b(n); [o]c(n)", &[Some(&e), Some(&d), None]).unwrap();
        assert_eq!(p.thread_dims, vec![0]);
        assert_eq!(p.ntuples(), 0);
    }

    #[test]
    fn active_binding() {
        let a = NdArray::zeros(Dtype::Double, &[3]);
        let b = NdArray::zeros(Dtype::Double, &[4]);
        assert!(matches!(
            plan("a(n); b(n); [o]c()", &[Some(&a), Some(&b), None]),
            Err(EngineError::ActiveDimMismatch { .. })
        ));
        let s = NdArray::scalar(Dtype::Double, 1.0);
        let p = plan("a(n); b(n); [o]c()", &[Some(&a), Some(&s), None]).unwrap();
        assert_eq!(p.dim_sizes["n"], 3);
        assert_eq!(p.params[1].padded, vec![true]);
        assert!(matches!(
            plan("a(n=2); [o]c()", &[Some(&a), None]),
            Err(EngineError::FixedSizeMismatch { fixed: 2, got: 3, .. })
        ));
        assert!(matches!(plan("a(); [o]c(m)", &[Some(&a), None]), Err(EngineError::UnresolvedDim { .. })));
        assert!(matches!(plan("a(); [o]c()", &[None, None]), Err(EngineError::MissingInput(_))));
    }

    #[test]
    fn supplied_output_must_match() {
        let a = NdArray::zeros(Dtype::Double, &[3, 2]);
        let o = NdArray::zeros(Dtype::Double, &[2]);
        assert!(matches!(
            plan("a(); [o]c()", &[Some(&a), Some(&o)]),
            Err(EngineError::OutputShapeMismatch { .. })
        ));
    }

    #[test]
    fn strides() {
        let (act, thr) = fresh_strides(&[3, 1, 4], 1, &[5, 4]);
        assert_eq!(act, vec![1]);
        assert_eq!(thr, vec![0, 3]);
        let (act, thr) = strides_for(&[], &[], 2, &[7]);
        assert_eq!(act, vec![0, 0]);
        assert_eq!(thr, vec![0]);
    }
}
