use crate::dsl::ast::{Span, THREAD_BUILTINS};
use crate::error::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Num(f64),
    Ident(String),
    Punct(&'static str),
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number `{v}`"),
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Punct(p) => format!("`{p}`"),
            Tok::Eof => "end of input".to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

// Longest first so that `<=` wins over `<`.
const PUNCT: [&str; 22] = [
    "+=", "++", "--", "<=", ">=", "==", "!=", "+", "-", "*", "/", "<", ">", "=", "(", ")", "{", "}",
    "[", "]", ",", ";",
];

pub fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);

    let advance = |i: &mut usize, line: &mut u32, col: &mut u32, c: char| {
        *i += 1;
        if c == '\n' {
            *line += 1;
            *col = 1;
        } else {
            *col += 1;
        }
    };

    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col, c);
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                let ch = chars[i];
                advance(&mut i, &mut line, &mut col, ch);
            }
            continue;
        }
        let span = Span::new(line, col);

        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            col += (i - start) as u32;
            let value = text.parse::<f64>().map_err(|_| ParseError::Syntax {
                span,
                expected: "a number".into(),
                found: format!("`{text}`"),
            })?;
            out.push(Token { tok: Tok::Num(value), span });
            continue;
        }

        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let mut text: String = chars[start..i].iter().collect();
            // `blockIdx.x` and friends lex as one identifier.
            if chars.get(i) == Some(&'.') && chars.get(i + 1) == Some(&'x') {
                let dotted = format!("{text}.x");
                let boundary = chars.get(i + 2).is_none_or(|c| !(c.is_ascii_alphanumeric() || *c == '_'));
                if boundary && THREAD_BUILTINS.contains(&dotted.as_str()) {
                    text = dotted;
                    i += 2;
                }
            }
            col += (i - start) as u32;
            out.push(Token { tok: Tok::Ident(text), span });
            continue;
        }

        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        match PUNCT.iter().find(|p| rest.starts_with(**p)) {
            Some(p) => {
                i += p.len();
                col += p.len() as u32;
                out.push(Token { tok: Tok::Punct(p), span });
            }
            None => return Err(ParseError::Lex { span, ch: c }),
        }
    }
    out.push(Token { tok: Tok::Eof, span: Span::new(line, col) });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexes_builtins_and_comments() {
        let toks = tokenize("int i = blockIdx.x * blockDim.x; // tail\n x += 1e-3").unwrap();
        let kinds: Vec<_> = toks.iter().map(|t| t.tok.clone()).collect();
        assert_eq!(kinds[3], Tok::Ident("blockIdx.x".into()));
        assert_eq!(kinds[5], Tok::Ident("blockDim.x".into()));
        assert_eq!(kinds[8], Tok::Punct("+="));
        assert_eq!(kinds[9], Tok::Num(1e-3));
        assert_eq!(toks[7].span.line, 2);
    }

    #[test]
    fn rejects_stray_characters() {
        let err = tokenize("real f() { return 1 @ 2; }").unwrap_err();
        assert!(matches!(err, ParseError::Lex { ch: '@', .. }));
    }
}
