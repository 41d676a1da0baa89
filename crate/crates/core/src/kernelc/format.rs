//! Canonical kernel text. Formatting a parsed kernel and parsing the result
//! gives back the same tree.

use std::fmt::Write;

use super::ast::*;

const P_ASSIGN: u8 = 1;
const P_TERNARY: u8 = 2;
const P_UNARY: u8 = 9;
const P_POW: u8 = 10;
const P_POSTFIX: u8 = 11;
const P_PRIMARY: u8 = 12;

fn bin_prec(op: BinOp) -> u8 {
    match op {
        BinOp::Pow => P_POW,
        op => op.precedence() + 2,
    }
}

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Int(i) if *i < 0 => P_UNARY,
        Expr::Float(f) if f.is_sign_negative() => P_UNARY,
        Expr::Assign(..) => P_ASSIGN,
        Expr::Ternary(..) => P_TERNARY,
        Expr::Binary(op, ..) => bin_prec(*op),
        Expr::Unary(..) | Expr::Cast(..) => P_UNARY,
        Expr::IncDec { prefix: true, .. } => P_UNARY,
        Expr::IncDec { prefix: false, .. } | Expr::Index(..) => P_POSTFIX,
        _ => P_PRIMARY,
    }
}

pub fn type_spec(t: &TypeSpec) -> String {
    match t {
        TypeSpec::Named(d) => d.name().to_string(),
        TypeSpec::Generic => "$GENERIC()".into(),
        TypeSpec::Switch(letters, types) => {
            let alts: Vec<&str> = types.iter().map(|t| t.name()).collect();
            format!("$T{}({})", letters.iter().collect::<String>(), alts.join(", "))
        }
    }
}

pub fn float_lit(f: f64) -> String {
    format!("{f:?}")
}

/// `name(d=>e, ...)` without the leading `$`.
pub fn access_body(a: &Access) -> String {
    let b: Vec<String> = a.bindings.iter().map(|(d, e)| format!("{d}=>{}", expr(e))).collect();
    format!("{}({})", a.param, b.join(", "))
}

fn meta(param: &str, field: &MetaField, style: MetaStyle) -> String {
    let f = match field {
        MetaField::Ndims => "ndims".to_string(),
        MetaField::Datatype => "datatype".to_string(),
        MetaField::Nvals => "nvals".to_string(),
        MetaField::Dims(i) | MetaField::Dimincs(i) => {
            let name = if matches!(field, MetaField::Dims(_)) { "dims" } else { "dimincs" };
            match style {
                MetaStyle::Pdl => format!("{name}({})", expr(i)),
                _ => format!("{name}[{}]", expr(i)),
            }
        }
    };
    match style {
        MetaStyle::Inline => format!("${param}({f})"),
        _ => format!("$PDL({param})->{f}"),
    }
}

fn wrap(e: &Expr, min: u8) -> String {
    let s = expr(e);
    if prec(e) < min {
        format!("({s})")
    } else {
        s
    }
}

pub fn expr(e: &Expr) -> String {
    match e {
        Expr::Int(i) => i.to_string(),
        Expr::Float(f) => float_lit(*f),
        Expr::Nan => "NAN".into(),
        Expr::Infinity => "INFINITY".into(),
        Expr::Ident(s) => s.clone(),
        Expr::Access(a) => format!("${}", access_body(a)),
        Expr::Size(d) => format!("$SIZE({d})"),
        Expr::Comp(c) => format!("$COMP({c})"),
        Expr::Index(b, i) => format!("{}[{}]", wrap(b, P_POSTFIX), expr(i)),
        Expr::Meta { param, field, style } => meta(param, field, *style),
        Expr::TypeSwitch(letters, alts) => {
            let a: Vec<String> = alts
                .iter()
                .map(|a| match a {
                    SwitchAlt::Type(t) => t.name().to_string(),
                    SwitchAlt::Expr(e) => wrap(e, P_TERNARY),
                })
                .collect();
            format!("$T{}({})", letters.iter().collect::<String>(), a.join(", "))
        }
        Expr::Call(b, args) => {
            let a: Vec<String> = args.iter().map(|a| wrap(a, P_TERNARY)).collect();
            format!("{}({})", b.name(), a.join(", "))
        }
        Expr::Unary(op, x) => {
            let inner = wrap(x, P_UNARY);
            let sym = if *op == UnOp::Neg { "-" } else { "!" };
            if inner.starts_with('-') || inner.starts_with('+') {
                format!("{sym} {inner}")
            } else {
                format!("{sym}{inner}")
            }
        }
        Expr::IncDec { target, inc, prefix } => {
            let op = if *inc { "++" } else { "--" };
            if *prefix {
                format!("{op}{}", wrap(target, P_UNARY))
            } else {
                format!("{}{op}", wrap(target, P_POSTFIX))
            }
        }
        Expr::Binary(BinOp::Pow, a, b) => format!("{} ** {}", wrap(a, P_POSTFIX), wrap(b, P_UNARY)),
        Expr::Binary(op, a, b) => {
            let p = bin_prec(*op);
            format!("{} {} {}", wrap(a, p), op.as_str(), wrap(b, p + 1))
        }
        Expr::Ternary(c, a, b) => {
            format!("{} ? {} : {}", wrap(c, P_TERNARY + 1), wrap(a, P_ASSIGN), wrap(b, P_TERNARY))
        }
        Expr::Assign(l, op, r) => format!("{} {} {}", wrap(l, P_TERNARY), op.as_str(), wrap(r, P_ASSIGN)),
        Expr::Cast(t, x) => format!("({}) {}", type_spec(t), wrap(x, P_UNARY)),
        Expr::IsBad(a) => format!("$ISBAD({})", access_body(a)),
        Expr::IsGood(a) => format!("$ISGOOD({})", access_body(a)),
        Expr::IsBadVar(v, p) => format!("$ISBADVAR({v}, {p})"),
        Expr::IsGoodVar(v, p) => format!("$ISGOODVAR({v}, {p})"),
        Expr::SetBadVar(v, p) => format!("$SETBADVAR({v}, {p})"),
        Expr::StateIsBad(p) => format!("$PDLSTATEISBAD({p})"),
        Expr::StateIsGood(p) => format!("$PDLSTATEISGOOD({p})"),
    }
}

fn pad(out: &mut String, indent: usize) {
    for _ in 0..indent {
        out.push_str("    ");
    }
}

/// Statement text without indentation or trailing newline, as used in `for`
/// headers.
fn simple(s: &Stmt) -> String {
    match s {
        Stmt::Declare(t, ds) => {
            let d: Vec<String> = ds
                .iter()
                .map(|d| match &d.init {
                    Some(e) => format!("{} = {}", d.name, wrap(e, P_ASSIGN)),
                    None => d.name.clone(),
                })
                .collect();
            format!("{} {}", type_spec(t), d.join(", "))
        }
        Stmt::Assign(l, op, r) => format!("{} {} {}", wrap(l, P_TERNARY), op.as_str(), wrap(r, P_ASSIGN)),
        Stmt::Expr(e) => expr(e),
        _ => String::new(),
    }
}

/// Appends `s` at `indent`, starting on the current line (no leading pad).
fn stmt_tail(out: &mut String, s: &Stmt, indent: usize) {
    match s {
        Stmt::Declare(..) | Stmt::Assign(..) | Stmt::Expr(_) => {
            out.push_str(&simple(s));
            out.push(';');
        }
        Stmt::Empty => out.push(';'),
        Stmt::Break => out.push_str("break;"),
        Stmt::Continue => out.push_str("continue;"),
        Stmt::Block(body) => {
            out.push_str("{\n");
            stmts_into(out, body, indent + 1);
            pad(out, indent);
            out.push('}');
        }
        Stmt::If(c, then, els) => {
            let _ = write!(out, "if ({}) ", expr(c));
            sub_body(out, then, indent);
            if let Some(e) = els {
                if matches!(**then, Stmt::Block(_)) {
                    out.push(' ');
                } else {
                    out.push('\n');
                    pad(out, indent);
                }
                out.push_str("else ");
                if matches!(**e, Stmt::If(..)) {
                    stmt_tail(out, e, indent);
                } else {
                    sub_body(out, e, indent);
                }
            }
        }
        Stmt::For(init, cond, step, body) => {
            let i = init.as_deref().map(simple).unwrap_or_default();
            let c = cond.as_ref().map(expr).unwrap_or_default();
            let st = step.as_deref().map(simple).unwrap_or_default();
            let _ = write!(out, "for ({i}; {c}; {st}) ");
            sub_body(out, body, indent);
        }
        Stmt::While(c, body) => {
            let _ = write!(out, "while ({}) ", expr(c));
            sub_body(out, body, indent);
        }
        Stmt::LoopOver(d, body) => {
            let _ = writeln!(out, "loop({d}) %{{");
            stmts_into(out, body, indent + 1);
            pad(out, indent);
            out.push_str("%}");
        }
        Stmt::ThreadLoop(body) => {
            out.push_str("threadloop %{\n");
            stmts_into(out, body, indent + 1);
            pad(out, indent);
            out.push_str("%}");
        }
        Stmt::SetBad(a) => {
            let _ = write!(out, "$SETBAD({});", access_body(a));
        }
        Stmt::StateSetBad(p) => {
            let _ = write!(out, "$PDLSTATESETBAD({p});");
        }
        Stmt::StateSetGood(p) => {
            let _ = write!(out, "$PDLSTATESETGOOD({p});");
        }
        Stmt::SetNdims(e) => {
            let _ = write!(out, "$SETNDIMS({});", expr(e));
        }
        Stmt::SetDims => out.push_str("$SETDIMS();"),
        Stmt::DoCompDims => out.push_str("$DOCOMPDIMS();"),
        Stmt::EquivCpOffs(a, b) => {
            let _ = write!(out, "$EquivCPOffs({}, {});", wrap(a, P_TERNARY), wrap(b, P_TERNARY));
        }
        Stmt::EquivCpTrunc(a, b, c) => {
            let _ = write!(
                out,
                "$EquivCPTrunc({}, {}, {});",
                wrap(a, P_TERNARY),
                wrap(b, P_TERNARY),
                wrap(c, P_TERNARY)
            );
        }
    }
}

fn sub_body(out: &mut String, s: &Stmt, indent: usize) {
    if matches!(s, Stmt::Block(_)) {
        stmt_tail(out, s, indent);
    } else {
        out.push('\n');
        pad(out, indent + 1);
        stmt_tail(out, s, indent + 1);
    }
}

fn stmts_into(out: &mut String, stmts: &[Stmt], indent: usize) {
    for s in stmts {
        pad(out, indent);
        stmt_tail(out, s, indent);
        out.push('\n');
    }
}

pub fn format_kernel(k: &KernelAst) -> String {
    let mut out = String::new();
    stmts_into(&mut out, &k.stmts, 0);
    out
}
