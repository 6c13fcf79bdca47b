//! Recursive-descent parser.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?
//! primary := number | ident | ident '(' sum ')' | '(' sum ')'
//! ```
//!
//! `^` is right-associative and binds tighter than prefix minus, so `-x^2`
//! is `-(x^2)` and `2^-1` is `2^(-1)`.

use thiserror::Error;

use super::{BinaryOp, Expr, UnaryOp};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("unknown function `{name}` at offset {offset}")]
    UnknownFunction { name: String, offset: usize },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. }
            | ParseError::UnknownIdentifier { offset, .. }
            | ParseError::UnknownFunction { offset, .. } => *offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn skip_ws(&mut self) {
        while let Some(c) = self.src[self.pos..].chars().next() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    /// Returns the next token and its starting offset.
    fn next(&mut self) -> Result<(Tok, usize), ParseError> {
        self.skip_ws();
        let start = self.pos;
        let rest = &self.src[self.pos..];
        let Some(c) = rest.chars().next() else {
            return Ok((Tok::End, start));
        };
        if c.is_ascii_digit() || (c == '.' && rest[1..].starts_with(|d: char| d.is_ascii_digit())) {
            return self.number(start);
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let len = rest
                .find(|ch: char| !(ch.is_ascii_alphanumeric() || ch == '_' || ch == '.'))
                .unwrap_or(rest.len());
            self.pos += len;
            return Ok((Tok::Ident(rest[..len].to_string()), start));
        }
        self.pos += c.len_utf8();
        let tok = match c {
            '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            other => {
                return Err(ParseError::Syntax {
                    offset: start,
                    message: format!("unexpected character `{other}`"),
                })
            }
        };
        Ok((tok, start))
    }

    fn number(&mut self, start: usize) -> Result<(Tok, usize), ParseError> {
        let bytes = self.src.as_bytes();
        let mut i = self.pos;
        let digits = |i: &mut usize| {
            while *i < bytes.len() && bytes[*i].is_ascii_digit() {
                *i += 1;
            }
        };
        digits(&mut i);
        if i < bytes.len() && bytes[i] == b'.' {
            i += 1;
            digits(&mut i);
        }
        if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
            let mut j = i + 1;
            if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                j += 1;
            }
            if j < bytes.len() && bytes[j].is_ascii_digit() {
                digits(&mut j);
                i = j;
            }
        }
        let text = &self.src[start..i];
        self.pos = i;
        text.parse::<f64>()
            .map(|v| (Tok::Num(v), start))
            .map_err(|_| ParseError::Syntax {
                offset: start,
                message: format!("malformed number `{text}`"),
            })
    }
}

struct Parser<'a, S> {
    lexer: Lexer<'a>,
    tok: Tok,
    at: usize,
    vars: &'a [S],
}

impl<'a, S: AsRef<str>> Parser<'a, S> {
    fn bump(&mut self) -> Result<(), ParseError> {
        let (tok, at) = self.lexer.next()?;
        self.tok = tok;
        self.at = at;
        Ok(())
    }

    fn syntax<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::Syntax {
            offset: self.at,
            message: message.into(),
        })
    }

    fn sum(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.product()?;
        while let Tok::Op(c @ ('+' | '-')) = self.tok {
            self.bump()?;
            let rhs = self.product()?;
            let op = if c == '+' { BinaryOp::Add } else { BinaryOp::Sub };
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn product(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Tok::Op(c @ ('*' | '/')) = self.tok {
            self.bump()?;
            let rhs = self.unary()?;
            let op = if c == '*' { BinaryOp::Mul } else { BinaryOp::Div };
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.tok == Tok::Op('-') {
            self.bump()?;
            let inner = self.unary()?;
            return Ok(Expr::unary(UnaryOp::Neg, inner));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if self.tok == Tok::Op('^') {
            self.bump()?;
            let exponent = self.unary()?;
            return Ok(Expr::binary(BinaryOp::Pow, base, exponent));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        match self.tok.clone() {
            Tok::Num(v) => {
                self.bump()?;
                Ok(Expr::Const(v))
            }
            Tok::Ident(name) => {
                let at = self.at;
                self.bump()?;
                if self.tok == Tok::LParen {
                    let Some(op) = UnaryOp::from_function_name(&name) else {
                        return Err(ParseError::UnknownFunction { name, offset: at });
                    };
                    self.bump()?;
                    let arg = self.sum()?;
                    self.expect_rparen()?;
                    return Ok(Expr::unary(op, arg));
                }
                if self.vars.iter().any(|v| v.as_ref() == name) {
                    Ok(Expr::var(&name))
                } else {
                    Err(ParseError::UnknownIdentifier { name, offset: at })
                }
            }
            Tok::LParen => {
                self.bump()?;
                let inner = self.sum()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Tok::End => self.syntax("unexpected end of input"),
            Tok::RParen => self.syntax("unexpected `)`"),
            Tok::Op(c) => self.syntax(format!("unexpected operator `{c}`")),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        if self.tok != Tok::RParen {
            return self.syntax("expected `)`");
        }
        self.bump()
    }
}

/// Parses `source` as an expression whose variables must all appear in `vars`.
///
/// Literal subtrees are folded while parsing; nothing else is simplified.
pub fn parse<S: AsRef<str>>(source: &str, vars: &[S]) -> Result<Expr, ParseError> {
    let mut parser = Parser {
        lexer: Lexer { src: source, pos: 0 },
        tok: Tok::End,
        at: 0,
        vars,
    };
    parser.bump()?;
    let expr = parser.sum()?;
    if parser.tok != Tok::End {
        return parser.syntax("unexpected trailing input");
    }
    Ok(expr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn var(n: &str) -> Arc<Expr> {
        Arc::new(Expr::var(n))
    }

    #[test]
    fn grammar_case() {
        let e = parse("x^2 + sin(y)", &["x", "y"]).unwrap();
        let expected = Expr::Binary(
            BinaryOp::Add,
            Arc::new(Expr::Binary(BinaryOp::Pow, var("x"), Arc::new(Expr::Const(2.0)))),
            Arc::new(Expr::Unary(UnaryOp::Sin, var("y"))),
        );
        assert_eq!(e, expected);
    }

    #[test]
    fn single_variable() {
        assert_eq!(parse("x", &["x"]).unwrap(), Expr::var("x"));
    }

    #[test]
    fn dangling_operator_reports_end_offset() {
        let err = parse("x +", &["x"]).unwrap_err();
        assert!(matches!(err, ParseError::Syntax { offset: 3, .. }), "{err:?}");
    }

    #[test]
    fn precedence_and_associativity() {
        let vars = ["x", "y", "z"];
        // -x^2 is -(x^2)
        let e = parse("-x^2", &vars).unwrap();
        assert!(matches!(e, Expr::Unary(UnaryOp::Neg, _)));
        // right-associative power
        let e = parse("2^3^2", &vars).unwrap();
        assert_eq!(e, Expr::Const(512.0));
        // left-associative subtraction and division
        assert_eq!(parse("8 - 4 - 2", &vars).unwrap(), Expr::Const(2.0));
        assert_eq!(parse("8 / 4 / 2", &vars).unwrap(), Expr::Const(1.0));
        assert_eq!(parse("2^-1", &vars).unwrap(), Expr::Const(0.5));
        assert_eq!(parse("2 + 3 * 4", &vars).unwrap(), Expr::Const(14.0));
    }

    #[test]
    fn numbers() {
        let none: [&str; 0] = [];
        assert_eq!(parse("1e-3", &none).unwrap(), Expr::Const(1e-3));
        assert_eq!(parse("2.5E2", &none).unwrap(), Expr::Const(250.0));
        assert_eq!(parse(".5", &none).unwrap(), Expr::Const(0.5));
    }

    #[test]
    fn dotted_identifiers() {
        let e = parse("n0.x * n1.in0.x", &["n0.x", "n1.in0.x"]).unwrap();
        assert_eq!(e.free_vars().len(), 2);
    }

    #[test]
    fn unknown_names() {
        assert_eq!(
            parse("x + q", &["x"]).unwrap_err(),
            ParseError::UnknownIdentifier { name: "q".into(), offset: 4 }
        );
        assert_eq!(
            parse("log(x)", &["x"]).unwrap_err(),
            ParseError::UnknownFunction { name: "log".into(), offset: 0 }
        );
    }

    #[test]
    fn malformed_inputs() {
        for src in ["", "(x", "x)", "x y", "*x", "x $ 1", "sin x", "sin()"] {
            assert!(parse(src, &["x"]).is_err(), "{src:?} should fail");
        }
    }
}
