use super::diagnostic::{codes, Diagnostic};
use crate::model::Span;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    /// Integer literal, kept as text until its sign is known.
    Int(String),
    /// Decimal literal with a fractional part.
    Dec(String),
    Semi,
    Colon,
    Comma,
    Dot,
    DotDot,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Assign,
    PlusEq,
    MinusEq,
    Arrow,
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
    Bang,
    Question,
    Prime,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Int(s) | Tok::Dec(s) => format!("number `{s}`"),
            Tok::Eof => "end of input".to_string(),
            other => format!("`{}`", other.text()),
        }
    }

    fn text(&self) -> &'static str {
        match self {
            Tok::Semi => ";",
            Tok::Colon => ":",
            Tok::Comma => ",",
            Tok::Dot => ".",
            Tok::DotDot => "..",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::Assign => ":=",
            Tok::PlusEq => "+=",
            Tok::MinusEq => "-=",
            Tok::Arrow => "->",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Slash => "/",
            Tok::Percent => "%",
            Tok::Eq => "=",
            Tok::Ne => "!=",
            Tok::Lt => "<",
            Tok::Le => "<=",
            Tok::Gt => ">",
            Tok::Ge => ">=",
            Tok::And => "&",
            Tok::Or => "|",
            Tok::Bang => "!",
            Tok::Question => "?",
            Tok::Prime => "'",
            _ => "",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

/// Splits `text` into tokens. `//` starts a comment running to end of line.
/// Lexical errors are collected; the offending character is skipped.
pub fn lex(text: &str) -> (Vec<Token>, Vec<Diagnostic>) {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut diags = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    while i < chars.len() {
        let c = chars[i];
        let span = Span::new(line, col);
        let peek = chars.get(i + 1).copied();
        let advance = |n: usize, i: &mut usize, col: &mut u32| {
            *i += n;
            *col += n as u32;
        };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            advance(1, &mut i, &mut col);
            continue;
        }
        if c == '/' && peek == Some('/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += (i - start) as u32;
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                span,
            });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let mut tok_is_dec = false;
            // `3..4` is a range, `3.25` a decimal
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                tok_is_dec = true;
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            col += (i - start) as u32;
            let text: String = chars[start..i].iter().collect();
            out.push(Token {
                tok: if tok_is_dec {
                    Tok::Dec(text)
                } else {
                    Tok::Int(text)
                },
                span,
            });
            continue;
        }
        let two = match (c, peek) {
            ('.', Some('.')) => Some(Tok::DotDot),
            (':', Some('=')) => Some(Tok::Assign),
            ('+', Some('=')) => Some(Tok::PlusEq),
            ('-', Some('=')) => Some(Tok::MinusEq),
            ('-', Some('>')) => Some(Tok::Arrow),
            ('!', Some('=')) => Some(Tok::Ne),
            ('<', Some('=')) => Some(Tok::Le),
            ('>', Some('=')) => Some(Tok::Ge),
            _ => None,
        };
        if let Some(tok) = two {
            out.push(Token { tok, span });
            advance(2, &mut i, &mut col);
            continue;
        }
        let one = match c {
            ';' => Some(Tok::Semi),
            ':' => Some(Tok::Colon),
            ',' => Some(Tok::Comma),
            '.' => Some(Tok::Dot),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '[' => Some(Tok::LBracket),
            ']' => Some(Tok::RBracket),
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            '/' => Some(Tok::Slash),
            '%' => Some(Tok::Percent),
            '=' => Some(Tok::Eq),
            '<' => Some(Tok::Lt),
            '>' => Some(Tok::Gt),
            '&' => Some(Tok::And),
            '|' => Some(Tok::Or),
            '!' => Some(Tok::Bang),
            '?' => Some(Tok::Question),
            '\'' => Some(Tok::Prime),
            _ => None,
        };
        match one {
            Some(tok) => out.push(Token { tok, span }),
            None => diags.push(Diagnostic::error(
                span,
                codes::SYNTAX,
                format!("unexpected character `{c}`"),
            )),
        }
        advance(1, &mut i, &mut col);
    }
    out.push(Token {
        tok: Tok::Eof,
        span: Span::new(line, col),
    });
    (out, diags)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        let (t, d) = lex(s);
        assert!(d.is_empty(), "{d:?}");
        t.into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn ranges_and_decimals() {
        assert_eq!(
            toks("[0..10] 0.25"),
            vec![
                Tok::LBracket,
                Tok::Int("0".into()),
                Tok::DotDot,
                Tok::Int("10".into()),
                Tok::RBracket,
                Tok::Dec("0.25".into()),
                Tok::Eof
            ]
        );
    }

    #[test]
    fn operators_and_comments() {
        assert_eq!(
            toks("b-=3; // gone\n x' -> T.lo"),
            vec![
                Tok::Ident("b".into()),
                Tok::MinusEq,
                Tok::Int("3".into()),
                Tok::Semi,
                Tok::Ident("x".into()),
                Tok::Prime,
                Tok::Arrow,
                Tok::Ident("T".into()),
                Tok::Dot,
                Tok::Ident("lo".into()),
                Tok::Eof
            ]
        );
    }

    #[test]
    fn positions_and_bad_chars() {
        let (t, d) = lex("var\n  x # y");
        assert_eq!(t[1].span, Span::new(2, 3));
        assert_eq!((t[1].span.line, t[1].span.col), (2, 3));
        assert_eq!(d.len(), 1);
        assert_eq!((d[0].line, d[0].col), (2, 5));
    }
}
