//! Text form of arrays: `dtype[d0,d1,...]{v v v ...}` with values in storage
//! order (dim 0 fastest), `BAD` for bad slots, and the bare token `null`.

use thiserror::Error;

use crate::ndarray::{Dtype, NdArray, Scalar};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LiteralError {
    #[error("unknown dtype name '{0}'")]
    UnknownDtypeName(String),
    #[error("dims {dims:?} need {expected} values, got {got}")]
    CountMismatch { dims: Vec<usize>, expected: usize, got: usize },
    #[error("malformed array literal: {0}")]
    Syntax(String),
}

fn syntax(msg: impl Into<String>) -> LiteralError {
    LiteralError::Syntax(msg.into())
}

pub fn parse_array_literal(text: &str) -> Result<NdArray, LiteralError> {
    let t = text.trim();
    if t == "null" {
        return Ok(NdArray::null());
    }
    let open = t.find('[').ok_or_else(|| syntax("expected '[' after the dtype"))?;
    let name = t[..open].trim();
    let dtype = Dtype::from_name(name).ok_or_else(|| LiteralError::UnknownDtypeName(name.to_string()))?;
    let rest = &t[open + 1..];
    let close = rest.find(']').ok_or_else(|| syntax("missing ']'"))?;
    let dims = rest[..close]
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>().map_err(|_| syntax(format!("bad dim '{s}'"))))
        .collect::<Result<Vec<_>, _>>()?;
    let body = rest[close + 1..].trim();
    let inner = body
        .strip_prefix('{')
        .and_then(|b| b.strip_suffix('}'))
        .ok_or_else(|| syntax("values must be enclosed in '{' '}'"))?;
    let mut values = Vec::new();
    let mut bad = false;
    for tok in inner.split_whitespace() {
        let v = if tok == "BAD" {
            bad = true;
            dtype.cast(crate::ndarray::default_badvalue(dtype))
        } else if let Ok(i) = tok.parse::<i64>() {
            dtype.cast(Scalar::Int(i))
        } else if let Ok(f) = tok.parse::<f64>() {
            dtype.cast(Scalar::Float(f))
        } else {
            return Err(syntax(format!("bad value '{tok}'")));
        };
        values.push(v);
    }
    let expected: usize = dims.iter().product();
    if values.len() != expected {
        return Err(LiteralError::CountMismatch { dims, expected, got: values.len() });
    }
    let mut a = NdArray::from_values(dtype, &dims, &values);
    a.set_badflag(bad);
    Ok(a)
}

fn format_value(dtype: Dtype, v: Scalar) -> String {
    match v {
        Scalar::Int(i) => i.to_string(),
        Scalar::Float(f) if f.is_nan() => "nan".into(),
        Scalar::Float(f) if dtype == Dtype::Float => (f as f32).to_string(),
        Scalar::Float(f) => f.to_string(),
    }
}

pub fn format_array(a: &NdArray) -> String {
    if a.is_null() {
        return "null".into();
    }
    let dims: Vec<String> = a.dims().iter().map(|d| d.to_string()).collect();
    let vals: Vec<String> = a
        .values()
        .into_iter()
        .map(|v| if a.badflag() && a.is_bad_value(v) { "BAD".into() } else { format_value(a.dtype(), v) })
        .collect();
    format!("{}[{}]{{{}}}", a.dtype(), dims.join(","), vals.join(" "))
}
