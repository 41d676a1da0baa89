//! Type promotion, generic-type resolution and type letters.

use thiserror::Error;

use crate::ndarray::Dtype;
use crate::sigparse::{ParamSpec, Signature};

pub use crate::ndarray::default_badvalue;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TypeError {
    #[error("generic type list is empty")]
    EmptyGenericList,
    #[error("unknown type letter '{0}'")]
    UnknownTypeLetter(char),
    #[error("type letter '{0}' listed twice")]
    DuplicateTypeLetter(char),
}

pub fn promote(a: Dtype, b: Dtype) -> Dtype {
    a.max(b)
}

/// Canonical letter. Indx prints as `N`; `I` is accepted on input.
pub fn letter_of(t: Dtype) -> char {
    match t {
        Dtype::Byte => 'B',
        Dtype::Short => 'S',
        Dtype::UShort => 'U',
        Dtype::Int => 'L',
        Dtype::Indx => 'N',
        Dtype::LongLong => 'Q',
        Dtype::Float => 'F',
        Dtype::Double => 'D',
    }
}

pub fn dtype_of_letter(c: char) -> Result<Dtype, TypeError> {
    Ok(match c {
        'B' => Dtype::Byte,
        'S' => Dtype::Short,
        'U' => Dtype::UShort,
        'L' => Dtype::Int,
        'N' | 'I' => Dtype::Indx,
        'Q' => Dtype::LongLong,
        'F' => Dtype::Float,
        'D' => Dtype::Double,
        other => return Err(TypeError::UnknownTypeLetter(other)),
    })
}

/// The dtypes an operator runs under, kept in ladder order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenericList(Vec<Dtype>);

impl GenericList {
    pub fn all() -> GenericList {
        GenericList(Dtype::ALL.to_vec())
    }

    pub fn new(types: &[Dtype]) -> Result<GenericList, TypeError> {
        if types.is_empty() {
            return Err(TypeError::EmptyGenericList);
        }
        let mut v = types.to_vec();
        v.sort();
        v.dedup();
        Ok(GenericList(v))
    }

    /// Parses letters such as `F,D`, `FD` or `B S`.
    pub fn parse(text: &str) -> Result<GenericList, TypeError> {
        let mut v = Vec::new();
        for c in text.chars().filter(|c| !c.is_whitespace() && *c != ',' && *c != '\'') {
            let t = dtype_of_letter(c)?;
            if v.contains(&t) {
                return Err(TypeError::DuplicateTypeLetter(c));
            }
            v.push(t);
        }
        GenericList::new(&v)
    }

    pub fn types(&self) -> &[Dtype] {
        &self.0
    }

    pub fn contains(&self, t: Dtype) -> bool {
        self.0.contains(&t)
    }

    /// Smallest member ranked at or above `t`, else the largest member.
    pub fn select(&self, t: Dtype) -> Dtype {
        self.0.iter().copied().find(|&g| g >= t).unwrap_or(*self.0.last().expect("non-empty"))
    }

    pub fn letters(&self) -> String {
        self.0.iter().map(|&t| letter_of(t)).collect()
    }
}

impl Default for GenericList {
    fn default() -> Self {
        GenericList::all()
    }
}

/// Resolves the generic dtype of a call.
///
/// `arg_dtypes[i]` is the dtype of the argument bound to parameter `i`, or
/// `None` when it does not take part (temporaries, outputs to be created).
/// Parameters with a forced dtype are excluded from the fold. With nothing to
/// fold the smallest member of `gl` is used.
pub fn resolve_generic(
    sig: &Signature,
    arg_dtypes: &[Option<Dtype>],
    gl: &GenericList,
) -> Result<Dtype, TypeError> {
    if gl.0.is_empty() {
        return Err(TypeError::EmptyGenericList);
    }
    let fold = sig
        .params
        .iter()
        .zip(arg_dtypes)
        .filter(|(p, _)| p.forced_dtype.is_none())
        .filter_map(|(_, t)| *t)
        .reduce(promote);
    Ok(match fold {
        Some(t) => gl.select(t),
        None => gl.0[0],
    })
}

/// The dtype a parameter is converted to under the resolved generic.
pub fn param_dtype(p: &ParamSpec, generic: Dtype) -> Dtype {
    match p.forced_dtype {
        Some(t) if p.plus_flag => promote(t, generic),
        Some(t) => t,
        None => generic,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sigparse::parse_signature;
    use Dtype::*;

    #[test]
    fn promote_examples() {
        assert_eq!(promote(Byte, Float), Float);
        assert_eq!(promote(Double, Double), Double);
        assert_eq!(promote(Short, UShort), UShort);
    }

    #[test]
    fn promote_algebra_exhaustive() {
        for a in Dtype::ALL {
            assert_eq!(promote(a, a), a);
            for b in Dtype::ALL {
                assert_eq!(promote(a, b), promote(b, a));
                assert!(promote(a, b) == a || promote(a, b) == b);
                for c in Dtype::ALL {
                    assert_eq!(promote(promote(a, b), c), promote(a, promote(b, c)));
                }
            }
        }
    }

    #[test]
    fn resolve_examples() {
        let all = GenericList::all();
        let s = parse_signature("a(); b(); [o]c()").unwrap();
        assert_eq!(resolve_generic(&s, &[Some(Byte), Some(Float), None], &all).unwrap(), Float);

        let s = parse_signature("float+ a(); b(m,n); [o]c").unwrap();
        let g = resolve_generic(&s, &[Some(Float), Some(Byte), None], &all).unwrap();
        assert_eq!(g, Byte);
        assert_eq!(param_dtype(&s.params[0], g), Float);

        let s = parse_signature("short+ a(); b()").unwrap();
        assert_eq!(param_dtype(&s.params[0], Byte), Short);
        assert_eq!(param_dtype(&s.params[0], Float), Float);

        let fd = GenericList::parse("F,D").unwrap();
        let s = parse_signature("vec(n); [o]len()").unwrap();
        assert_eq!(resolve_generic(&s, &[Some(Int), None], &fd).unwrap(), Float);
        assert_eq!(resolve_generic(&s, &[Some(Double), None], &fd).unwrap(), Double);
    }

    #[test]
    fn clamp_to_largest() {
        let f = GenericList::parse("F").unwrap();
        let s = parse_signature("a(); [o]b()").unwrap();
        assert_eq!(resolve_generic(&s, &[Some(Double), None], &f).unwrap(), Float);
    }

    #[test]
    fn resolve_stays_in_list() {
        let s = parse_signature("a(); b()").unwrap();
        let lists = ["B", "FD", "SL", "D", "BUQ", "NF"];
        for l in lists {
            let gl = GenericList::parse(l).unwrap();
            for a in Dtype::ALL {
                for b in Dtype::ALL {
                    let g = resolve_generic(&s, &[Some(a), Some(b)], &gl).unwrap();
                    assert!(gl.contains(g));
                }
            }
        }
        let all = GenericList::all();
        for a in Dtype::ALL {
            for b in Dtype::ALL {
                assert_eq!(resolve_generic(&s, &[Some(a), Some(b)], &all).unwrap(), promote(a, b));
            }
        }
    }

    #[test]
    fn letters() {
        assert_eq!(letter_of(Float), 'F');
        assert_eq!(dtype_of_letter('N').unwrap(), Indx);
        assert_eq!(dtype_of_letter('I').unwrap(), Indx);
        assert_eq!(dtype_of_letter('Q').unwrap(), LongLong);
        assert_eq!(dtype_of_letter('X'), Err(TypeError::UnknownTypeLetter('X')));
        for t in Dtype::ALL {
            assert_eq!(dtype_of_letter(letter_of(t)).unwrap(), t);
        }
        assert_eq!(GenericList::parse(""), Err(TypeError::EmptyGenericList));
        assert_eq!(GenericList::parse("DF").unwrap().letters(), "FD");
    }

    #[test]
    fn badvalues() {
        assert_eq!(default_badvalue(Short).trunc_i64(), -32768);
        assert_eq!(default_badvalue(UShort).trunc_i64(), 65535);
        assert!(default_badvalue(Double).as_f64().is_nan());
    }
}
