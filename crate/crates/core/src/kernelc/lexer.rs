use super::KernelError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    /// `$NAME`, without the dollar.
    Dollar(String),
    Int(i64),
    Float(f64),
    Punct(&'static str),
    Eof,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub pos: usize,
}

const PUNCTS: [&str; 36] = [
    "%{", "%}", "**", "++", "--", "->", "+=", "-=", "*=", "/=", "==", "!=", "<=", ">=", "&&",
    "||", "=>", "+", "-", "*", "/", "%", "<", ">", "=", "!", "?", ":", ";", ",", "(", ")", "{",
    "}", "[", "]",
];

fn punct_at(s: &str) -> Option<&'static str> {
    PUNCTS.iter().copied().find(|p| s.starts_with(p))
}

fn is_ident_start(c: u8) -> bool {
    c.is_ascii_alphabetic() || c == b'_'
}

fn is_ident_char(c: u8) -> bool {
    c.is_ascii_alphanumeric() || c == b'_'
}

/// Skips a parenthesized group starting at `i` (which must hold `(`),
/// honoring string literals. Returns the index just past the closing paren.
fn skip_group(src: &[u8], mut i: usize) -> Result<usize, KernelError> {
    let start = i;
    let mut depth = 0usize;
    while i < src.len() {
        match src[i] {
            b'(' => depth += 1,
            b')' => {
                depth -= 1;
                if depth == 0 {
                    return Ok(i + 1);
                }
            }
            b'"' => {
                i += 1;
                while i < src.len() && src[i] != b'"' {
                    if src[i] == b'\\' {
                        i += 1;
                    }
                    i += 1;
                }
            }
            _ => {}
        }
        i += 1;
    }
    Err(KernelError::syntax(start, "unterminated comment group"))
}

pub fn tokenize(text: &str) -> Result<Vec<Token>, KernelError> {
    let src = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < src.len() {
        let c = src[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if text[i..].starts_with("//") {
            while i < src.len() && src[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if text[i..].starts_with("/*") {
            match text[i + 2..].find("*/") {
                Some(end) => i += end + 4,
                None => return Err(KernelError::syntax(i, "unterminated comment")),
            }
            continue;
        }
        let start = i;
        if c == b'$' || is_ident_start(c) {
            let dollar = c == b'$';
            if dollar {
                i += 1;
            }
            let name_start = i;
            while i < src.len() && is_ident_char(src[i]) {
                i += 1;
            }
            if i == name_start {
                return Err(KernelError::syntax(start, "expected a name after '$'"));
            }
            let name = &text[name_start..i];
            if name == "PDL_COMMENT" {
                let mut j = i;
                while j < src.len() && src[j].is_ascii_whitespace() {
                    j += 1;
                }
                if j < src.len() && src[j] == b'(' {
                    i = skip_group(src, j)?;
                    continue;
                }
            }
            out.push(Token {
                tok: if dollar { Tok::Dollar(name.to_string()) } else { Tok::Ident(name.to_string()) },
                pos: start,
            });
            continue;
        }
        if c.is_ascii_digit() || (c == b'.' && src.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            let mut is_float = false;
            while i < src.len() && src[i].is_ascii_digit() {
                i += 1;
            }
            if i < src.len() && src[i] == b'.' {
                is_float = true;
                i += 1;
                while i < src.len() && src[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < src.len() && (src[i] == b'e' || src[i] == b'E') {
                let mut j = i + 1;
                if j < src.len() && (src[j] == b'+' || src[j] == b'-') {
                    j += 1;
                }
                if j < src.len() && src[j].is_ascii_digit() {
                    is_float = true;
                    i = j;
                    while i < src.len() && src[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let lit = &text[start..i];
            let tok = if is_float {
                Tok::Float(lit.parse().map_err(|_| KernelError::syntax(start, "bad float literal"))?)
            } else {
                Tok::Int(lit.parse().map_err(|_| KernelError::syntax(start, "integer literal out of range"))?)
            };
            if i < src.len() && is_ident_start(src[i]) {
                return Err(KernelError::syntax(i, "unexpected suffix on number"));
            }
            out.push(Token { tok, pos: start });
            continue;
        }
        match punct_at(&text[i..]) {
            Some(p) => {
                out.push(Token { tok: Tok::Punct(p), pos: start });
                i += p.len();
            }
            None => {
                let ch = text[i..].chars().next().unwrap_or('?');
                return Err(KernelError::syntax(start, format!("unexpected character '{ch}'")));
            }
        }
    }
    out.push(Token { tok: Tok::Eof, pos: src.len() });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        tokenize(s).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn basic_tokens() {
        assert_eq!(
            toks("$o() = $a(n=>2) ** 2.5;"),
            vec![
                Tok::Dollar("o".into()),
                Tok::Punct("("),
                Tok::Punct(")"),
                Tok::Punct("="),
                Tok::Dollar("a".into()),
                Tok::Punct("("),
                Tok::Ident("n".into()),
                Tok::Punct("=>"),
                Tok::Int(2),
                Tok::Punct(")"),
                Tok::Punct("**"),
                Tok::Float(2.5),
                Tok::Punct(";"),
                Tok::Eof,
            ]
        );
    }

    #[test]
    fn comments_skipped() {
        assert_eq!(
            toks("a /* x */ // y\n PDL_COMMENT(\"it's (odd)\") $PDL_COMMENT(\"z\") b"),
            vec![Tok::Ident("a".into()), Tok::Ident("b".into()), Tok::Eof]
        );
    }

    #[test]
    fn loop_braces_and_modulo() {
        assert_eq!(
            toks("loop(n) %{ x % 2; %}"),
            vec![
                Tok::Ident("loop".into()),
                Tok::Punct("("),
                Tok::Ident("n".into()),
                Tok::Punct(")"),
                Tok::Punct("%{"),
                Tok::Ident("x".into()),
                Tok::Punct("%"),
                Tok::Int(2),
                Tok::Punct(";"),
                Tok::Punct("%}"),
                Tok::Eof,
            ]
        );
    }

    #[test]
    fn numbers() {
        assert_eq!(toks("1e-9 .5 3."), vec![Tok::Float(1e-9), Tok::Float(0.5), Tok::Float(3.0), Tok::Eof]);
        assert!(tokenize("99999999999999999999").is_err());
        assert!(tokenize("a @ b").is_err());
        assert!(tokenize("/* open").is_err());
    }
}
